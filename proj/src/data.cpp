#include "knnloc/data.hpp"

#include "knnloc/errors.hpp"
#include "knnloc/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace knnloc {

// ---------------------------------------------------------------------------
// Rng lives here; it is small and only the splitter and simulator use it.

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::below: bound must be > 0");
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = engine_();
    if (r >= threshold) return r % bound;
  }
}

double Rng::normal() {
  if (spare_) {
    const double z = *spare_;
    spare_.reset();
    return z;
  }
  constexpr double two_pi = 6.283185307179586476925286766559;
  const double u1 = 1.0 - uniform(); // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  spare_ = radius * std::sin(two_pi * u2);
  return radius * std::cos(two_pi * u2);
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(master ^ mix64(stream + 0x9e3779b97f4a7c15ULL));
}

// ---------------------------------------------------------------------------

void Dataset::validate() const {
  if (features.rows() < 1 || features.cols() < 1) {
    throw std::invalid_argument("dataset needs at least one row and one feature");
  }
  if (response.size() != features.rows()) {
    throw std::invalid_argument("dataset: response length " +
                                std::to_string(response.size()) +
                                " does not match " +
                                std::to_string(features.rows()) + " rows");
  }
  if (static_cast<Index>(feature_names.size()) != features.cols()) {
    throw std::invalid_argument("dataset: feature name count does not match columns");
  }
  if (!features.allFinite() || !response.allFinite()) {
    throw std::invalid_argument("dataset contains non-finite values");
  }
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  Dataset out;
  out.features.resize(static_cast<Index>(rows.size()), features.cols());
  out.response.resize(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.features.row(static_cast<Index>(r)) = features.row(rows[r]);
    out.response(static_cast<Index>(r)) = response(rows[r]);
  }
  out.feature_names = feature_names;
  out.target_name = target_name;
  return out;
}

Dataset make_dataset(Eigen::MatrixXd features, Eigen::VectorXd response) {
  Dataset d;
  d.feature_names.reserve(static_cast<std::size_t>(features.cols()));
  for (Index j = 0; j < features.cols(); ++j) {
    d.feature_names.push_back("x" + std::to_string(j + 1));
  }
  d.features = std::move(features);
  d.response = std::move(response);
  return d;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

// Splits one logical record; returns false at end of input. Handles quoted
// fields (with "" escapes and embedded delimiters/newlines).
bool next_record(std::string_view text, std::size_t& pos, char delim,
                 std::vector<std::string>& fields) {
  fields.clear();
  if (pos >= text.size()) return false;
  std::string field;
  bool quoted = false;
  bool any = false;
  while (pos < text.size()) {
    const char c = text[pos];
    any = true;
    if (quoted) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field.push_back('"');
          pos += 2;
          continue;
        }
        quoted = false;
      } else {
        field.push_back(c);
      }
      ++pos;
      continue;
    }
    if (c == '"') {
      quoted = true;
      ++pos;
    } else if (c == delim) {
      fields.push_back(std::move(field));
      field.clear();
      ++pos;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
      ++pos;
      break;
    } else {
      field.push_back(c);
      ++pos;
    }
  }
  fields.push_back(std::move(field));
  return any;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool blank(const std::vector<std::string>& fields) {
  return fields.size() == 1 && trim(fields[0]).empty();
}

} // namespace

Table parse_table(std::string_view text, char delimiter, std::string_view source) {
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB &&
      static_cast<unsigned char>(text[2]) == 0xBF) {
    text.remove_prefix(3);
  }
  std::size_t pos = 0;
  std::vector<std::string> header;
  if (!next_record(text, pos, delimiter, header) || blank(header)) {
    throw std::invalid_argument(std::string(source) + ": missing header row");
  }
  for (auto& h : header) h = std::string(trim(h));
  for (std::size_t c = 0; c < header.size(); ++c) {
    for (std::size_t e = 0; e < c; ++e) {
      if (header[e] == header[c]) {
        throw std::invalid_argument(std::string(source) + ": column '" + header[c] +
                                    "' appears more than once");
      }
    }
  }

  std::vector<double> values;
  std::vector<std::string> fields;
  Index n = 0;
  std::size_t line = 1;
  while (next_record(text, pos, delimiter, fields)) {
    ++line;
    if (blank(fields)) continue;
    if (fields.size() != header.size()) {
      throw std::invalid_argument(
          std::string(source) + ": row " + std::to_string(n + 1) + " (line " +
          std::to_string(line) + ") has " + std::to_string(fields.size()) +
          " fields, expected " + std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      if (!parse_double(fields[c], v) || !std::isfinite(v)) {
        throw std::invalid_argument(
            std::string(source) + ": row " + std::to_string(n + 1) +
            " (line " + std::to_string(line) + "), column '" + header[c] +
            "': cannot use value '" + fields[c] + "' (need a finite number)");
      }
      values.push_back(v);
    }
    ++n;
  }
  if (n == 0) {
    throw std::invalid_argument(std::string(source) + ": no data rows");
  }

  const auto width = static_cast<Index>(header.size());
  Table t;
  t.columns = std::move(header);
  t.values.resize(n, width);
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < width; ++c) t.values(r, c) = values[static_cast<std::size_t>(r * width + c)];
  }
  return t;
}

Index Table::column(std::string_view name) const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] == name) return static_cast<Index>(c);
  }
  return -1;
}

Dataset to_dataset(const Table& table, std::string_view target_column,
                   std::span<const std::string> skip, std::string_view source) {
  const Index target = table.column(target_column);
  if (target < 0) {
    throw std::invalid_argument(std::string(source) + ": target column '" +
                                std::string(target_column) + "' not found");
  }
  std::vector<Index> feature_cols;
  Dataset d;
  d.target_name = std::string(target_column);
  for (Index c = 0; c < table.cols(); ++c) {
    const std::string& name = table.columns[static_cast<std::size_t>(c)];
    if (c == target || std::find(skip.begin(), skip.end(), name) != skip.end()) continue;
    feature_cols.push_back(c);
    d.feature_names.push_back(name);
  }
  if (feature_cols.empty()) {
    throw std::invalid_argument(std::string(source) + ": need at least one feature column");
  }
  d.features.resize(table.rows(), static_cast<Index>(feature_cols.size()));
  for (std::size_t f = 0; f < feature_cols.size(); ++f) {
    d.features.col(static_cast<Index>(f)) = table.values.col(feature_cols[f]);
  }
  d.response = table.values.col(target);
  return d;
}

Dataset parse_csv(std::string_view text, std::string_view target_column,
                  char delimiter, std::string_view source) {
  return to_dataset(parse_table(text, delimiter, source), target_column, {}, source);
}

Table load_table(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return parse_table(buf.str(), delimiter, path.string());
}

Dataset load_csv(const std::filesystem::path& path,
                 std::string_view target_column, char delimiter) {
  return to_dataset(load_table(path, delimiter), target_column, {}, path.string());
}

// ---------------------------------------------------------------------------
// Splits

SplitPlan::SplitPlan(std::vector<SplitRole> roles, std::uint64_t seed, Index n)
    : roles_(std::move(roles)), seed_(seed), n_(n) {
  std::vector<char> seen(static_cast<std::size_t>(std::max<Index>(n, 0)), 0);
  std::unordered_set<std::string> names;
  for (const auto& role : roles_) {
    if (!names.insert(role.name).second) {
      throw std::invalid_argument("split plan: duplicate role '" + role.name + "'");
    }
    if (role.indices.empty()) {
      throw std::invalid_argument("split plan: role '" + role.name + "' is empty");
    }
    for (Index i : role.indices) {
      if (i < 0 || i >= n) {
        throw std::invalid_argument("split plan: row " + std::to_string(i) +
                                    " outside 0.." + std::to_string(n - 1));
      }
      auto& flag = seen[static_cast<std::size_t>(i)];
      if (flag) {
        throw std::invalid_argument("split plan: row " + std::to_string(i) +
                                    " assigned twice (role '" + role.name + "')");
      }
      flag = 1;
    }
  }
}

bool SplitPlan::has_role(std::string_view name) const {
  return std::any_of(roles_.begin(), roles_.end(),
                     [&](const SplitRole& r) { return r.name == name; });
}

const IndexSet& SplitPlan::role(std::string_view name) const {
  for (const auto& r : roles_) {
    if (r.name == name) return r.indices;
  }
  throw std::invalid_argument("split plan has no role '" + std::string(name) + "'");
}

std::vector<Index> split_sizes(Index n, std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("split: no roles given");
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("split: weights must be positive and finite");
    }
  }
  if (n < static_cast<Index>(weights.size())) {
    throw std::invalid_argument("split: n = " + std::to_string(n) +
                                " is smaller than the number of roles (" +
                                std::to_string(weights.size()) + ")");
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<Index> sizes(weights.size());
  std::vector<double> frac(weights.size());
  Index used = 0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const double quota = static_cast<double>(n) * weights[j] / total;
    sizes[j] = static_cast<Index>(std::floor(quota));
    frac[j] = quota - std::floor(quota);
    used += sizes[j];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (Index r = 0; r < n - used; ++r) {
    ++sizes[order[static_cast<std::size_t>(r) % order.size()]];
  }
  return sizes;
}

SplitPlan make_splits(Index n, const RoleWeights& fractions, std::uint64_t seed) {
  std::vector<double> weights;
  weights.reserve(fractions.size());
  for (const auto& f : fractions) weights.push_back(f.second);
  const auto sizes = split_sizes(n, weights);
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    if (sizes[j] == 0) {
      throw std::invalid_argument("split: role '" + fractions[j].first +
                                  "' would receive no rows at n = " +
                                  std::to_string(n));
    }
  }

  IndexSet perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed);
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }

  std::vector<SplitRole> roles;
  auto it = perm.begin();
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    roles.push_back({fractions[j].first, IndexSet(it, it + sizes[j])});
    it += sizes[j];
  }
  return SplitPlan(std::move(roles), seed, n);
}

bool disjoint(std::span<const Index> a, std::span<const Index> b) {
  std::unordered_set<Index> lookup(a.begin(), a.end());
  return std::none_of(b.begin(), b.end(),
                      [&](Index i) { return lookup.count(i) > 0; });
}

// ---------------------------------------------------------------------------
// Standardizer

Standardizer Standardizer::identity(Index p) {
  return {Eigen::VectorXd::Zero(p), Eigen::VectorXd::Ones(p),
          std::vector<bool>(static_cast<std::size_t>(p), false)};
}

bool Standardizer::is_identity() const {
  return (mean.array() == 0.0).all() && (scale.array() == 1.0).all();
}

Eigen::VectorXd Standardizer::apply(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != mean.size()) {
    throw std::invalid_argument("standardizer: expected " +
                                std::to_string(mean.size()) + " features, got " +
                                std::to_string(x.size()));
  }
  Eigen::VectorXd out = x;
  for (Index j = 0; j < x.size(); ++j) {
    if (!constant[static_cast<std::size_t>(j)]) out(j) = (x(j) - mean(j)) / scale(j);
  }
  return out;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& features) const {
  if (features.cols() != mean.size()) {
    throw std::invalid_argument("standardizer: expected " +
                                std::to_string(mean.size()) + " features, got " +
                                std::to_string(features.cols()));
  }
  Eigen::MatrixXd out = features;
  for (Index j = 0; j < features.cols(); ++j) {
    if (!constant[static_cast<std::size_t>(j)]) {
      out.col(j) = (features.col(j).array() - mean(j)) / scale(j);
    }
  }
  return out;
}

Standardizer fit_standardizer(const Dataset& data, std::span<const Index> rows) {
  if (rows.empty()) throw std::invalid_argument("standardizer: empty row set");
  const Index p = data.cols();
  Standardizer s{Eigen::VectorXd::Zero(p), Eigen::VectorXd::Ones(p),
                 std::vector<bool>(static_cast<std::size_t>(p), false)};
  const double n = static_cast<double>(rows.size());
  for (Index j = 0; j < p; ++j) {
    double sum = 0.0;
    for (Index r : rows) sum += data.features(r, j);
    const double mu = sum / n;
    double ss = 0.0;
    for (Index r : rows) {
      const double d = data.features(r, j) - mu;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    if (sd > 0.0 && std::isfinite(sd)) {
      s.mean(j) = mu;
      s.scale(j) = sd;
    } else {
      s.constant[static_cast<std::size_t>(j)] = true;
    }
  }
  return s;
}

Dataset apply_standardizer(const Standardizer& s, const Dataset& data) {
  Dataset out = data;
  out.features = s.apply(data.features);
  return out;
}

} // namespace knnloc
