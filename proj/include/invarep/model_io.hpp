#pragma once

#include <string>

#include "invarep/downstream.hpp"
#include "invarep/upstream.hpp"

namespace invarep {

// Model files are versioned JSON documents carrying every parameter at full
// precision (shortest round-trippable decimal), so save -> load -> save
// reproduces the file byte for byte and the loaded model computes bit-equal
// forward passes. Unknown versions, missing fields, wrong kinds and truncated
// documents all raise SchemaError.
inline constexpr int kModelFormatVersion = 1;

void save_upstream_model(const UpstreamModel& model, const std::string& path);
UpstreamModel load_upstream_model(const std::string& path);

void save_downstream_model(const DownstreamModel& model, const std::string& path);
DownstreamModel load_downstream_model(const std::string& path);

}  // namespace invarep
