#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace knnloc {

using Index = Eigen::Index;
using IndexSet = std::vector<Index>;

//! The raw sample: n rows of p finite covariates plus a finite response.
struct Dataset {
  Eigen::MatrixXd features;
  Eigen::VectorXd response;
  std::vector<std::string> feature_names;
  std::string target_name = "y";

  Index rows() const { return features.rows(); }
  Index cols() const { return features.cols(); }

  //! Throws std::invalid_argument when shapes disagree or any entry is
  //! non-finite.
  void validate() const;

  //! Copies the listed rows, in the order given.
  Dataset subset(std::span<const Index> rows) const;
};

//! Builds a Dataset with default feature names x1..xp.
Dataset make_dataset(Eigen::MatrixXd features, Eigen::VectorXd response);

//! A numeric table with named columns.
struct Table {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
  //! Position of the named column, or -1.
  Index column(std::string_view name) const;
};

//! Header row plus finite numeric fields; quoted fields follow RFC 4180 and a
//! UTF-8 byte-order mark is skipped. Column names must be unique.
Table parse_table(std::string_view text, char delimiter = ',',
                  std::string_view source = "<memory>");
//! Throws IoError when the file cannot be read.
Table load_table(const std::filesystem::path& path, char delimiter = ',');

//! `target_column` becomes the response; every other column not listed in
//! `skip` becomes a feature, in table order.
Dataset to_dataset(const Table& table, std::string_view target_column,
                   std::span<const std::string> skip = {},
                   std::string_view source = "<memory>");

//! Reads a delimited text file with a header row. Every non-target column
//! becomes a feature, in file order. Quoted fields follow RFC 4180.
Dataset load_csv(const std::filesystem::path& path,
                 std::string_view target_column, char delimiter = ',');

//! Parses CSV text already in memory (same rules as load_csv).
Dataset parse_csv(std::string_view text, std::string_view target_column,
                  char delimiter = ',', std::string_view source = "<memory>");

struct SplitRole {
  std::string name;
  IndexSet indices;
};

//! Named, pairwise-disjoint row sets drawn from one shuffle of 0..n-1.
class SplitPlan {
public:
  SplitPlan() = default;
  SplitPlan(std::vector<SplitRole> roles, std::uint64_t seed, Index n);

  const std::vector<SplitRole>& roles() const { return roles_; }
  std::uint64_t seed() const { return seed_; }
  Index n() const { return n_; }

  bool has_role(std::string_view name) const;
  const IndexSet& role(std::string_view name) const;

private:
  std::vector<SplitRole> roles_;
  std::uint64_t seed_ = 0;
  Index n_ = 0;
};

using RoleWeights = std::vector<std::pair<std::string, double>>;

//! Role sizes by largest-remainder rounding of n * w_j / sum(w). Remainder
//! ties go to the earlier role.
std::vector<Index> split_sizes(Index n, std::span<const double> weights);

//! Fisher-Yates shuffle of 0..n-1 with Rng(seed), then consecutive cuts of the
//! split_sizes lengths in role order. Within a role, rows keep shuffle order.
SplitPlan make_splits(Index n, const RoleWeights& fractions,
                      std::uint64_t seed);

//! True when the two index sets share no element.
bool disjoint(std::span<const Index> a, std::span<const Index> b);

//! Per-feature centering and scaling with the population standard deviation.
//! Constant features are flagged and left untouched.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  std::vector<bool> constant;

  static Standardizer identity(Index p);

  Index size() const { return mean.size(); }
  bool is_identity() const;

  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;
};

Standardizer fit_standardizer(const Dataset& data, std::span<const Index> rows);
Dataset apply_standardizer(const Standardizer& s, const Dataset& data);

} // namespace knnloc
