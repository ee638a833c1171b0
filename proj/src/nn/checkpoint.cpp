#include "tabnet/nn/checkpoint.hpp"

#include <stdexcept>

namespace tabnet::nn {

namespace {

constexpr const char* kKindKey = "tabnet_kind";
constexpr const char* kConfigKey = "tabnet_config";

void save(const std::string& path, torch::nn::Module& model, const std::string& kind, const nlohmann::json& config) {
  torch::serialize::OutputArchive archive;
  model.save(archive);
  archive.write(kKindKey, c10::IValue(kind));
  archive.write(kConfigKey, c10::IValue(config.dump()));
  archive.save_to(path);
}

nlohmann::json open(const std::string& path, const std::string& kind, torch::serialize::InputArchive& archive) {
  archive.load_from(path);
  c10::IValue k, c;
  if (!archive.try_read(kKindKey, k) || !archive.try_read(kConfigKey, c))
    throw std::runtime_error(path + ": not a tabnet checkpoint");
  if (k.toStringRef() != kind) throw std::runtime_error(path + ": holds a " + k.toStringRef() + " model, not " + kind);
  return nlohmann::json::parse(c.toStringRef());
}

}  // namespace

void save_detector(const std::string& path, detector::TableDetector& model) {
  save(path, *model, "detector", model->config);
}

void save_tsr(const std::string& path, tsr::TsrModel& model) { save(path, *model, "tsr", model->config); }

detector::TableDetector load_detector(const std::string& path) {
  torch::serialize::InputArchive archive;
  detector::TableDetector model(open(path, "detector", archive).get<detector::DetectorConfig>());
  model->load(archive);
  return model;
}

tsr::TsrModel load_tsr(const std::string& path) {
  torch::serialize::InputArchive archive;
  tsr::TsrModel model(open(path, "tsr", archive).get<tsr::TsrConfig>());
  model->load(archive);
  return model;
}

}  // namespace tabnet::nn
