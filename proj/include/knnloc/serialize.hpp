#pragma once

#include "knnloc/data.hpp"
#include "knnloc/estimators.hpp"
#include "knnloc/pipeline.hpp"
#include "knnloc/varselect.hpp"

#include <json.hpp>

#include <filesystem>

namespace knnloc {

using Json = nlohmann::ordered_json;

inline constexpr int kModelFormatVersion = 1;

Json to_json(const Standardizer& s);
Standardizer standardizer_from_json(const Json& j);

Json to_json(const MeanModel& m);
MeanModel mean_model_from_json(const Json& j);

Json to_json(const VarianceModel& v);
VarianceModel variance_model_from_json(const Json& j);

//! Self-contained model document: feature names, standardizer, both
//! estimators with their training slices, error mode and calibration.
Json to_json(const ScaleLocModel& model);
ScaleLocModel model_from_json(const Json& j);

Json to_json(const SelectionReport& r);
Json to_json(const KSelectionTrace& t);
Json to_json(const SplitPlan& plan);
Json to_json(const KGridPolicy& g);
KGridPolicy k_grid_from_json(const Json& j);

//! Every PipelineConfig field.
Json to_json(const PipelineConfig& c);
//! Starts from `base` and overrides the keys present in `j`; unknown keys are
//! an error.
PipelineConfig config_from_json(const Json& j, PipelineConfig base = {});

const char* to_string(ErrorMode mode);
ErrorMode error_mode_from_string(std::string_view s);

//! Throws IoError on unreadable files or malformed JSON.
Json read_json(const std::filesystem::path& path);
//! Pretty-printed with a trailing newline. Throws IoError.
void write_json(const std::filesystem::path& path, const Json& j);

void save_model(const std::filesystem::path& path, const ScaleLocModel& model);
ScaleLocModel load_model(const std::filesystem::path& path);

} // namespace knnloc
