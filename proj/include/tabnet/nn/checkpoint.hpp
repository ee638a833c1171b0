#pragma once

#include <string>

#include <json.hpp>

#include "tabnet/nn/detector.hpp"
#include "tabnet/nn/tsr.hpp"

namespace tabnet::nn {

// A checkpoint is a torch archive holding the parameters and buffers plus
// the model kind ("detector" or "tsr") and its JSON config.

void save_detector(const std::string& path, detector::TableDetector& model);
void save_tsr(const std::string& path, tsr::TsrModel& model);

/// Throws std::runtime_error when the file holds another model kind.
detector::TableDetector load_detector(const std::string& path);
tsr::TsrModel load_tsr(const std::string& path);

}  // namespace tabnet::nn
