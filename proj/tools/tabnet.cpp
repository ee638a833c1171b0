// tabnet: synthetic data, training, inference, evaluation and overlays.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tabnet/datagen.hpp"
#include "tabnet/imaging.hpp"
#include "tabnet/manifest.hpp"
#include "tabnet/metrics.hpp"
#include "tabnet/nn/checkpoint.hpp"
#include "tabnet/nn/pipeline.hpp"
#include "tabnet/nn/trainer.hpp"
#include "tabnet/version.hpp"

namespace fs = std::filesystem;
using namespace tabnet;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config, "JSON configuration file")->envname("TABNET_CONFIG");
  cmd->add_option("--seed", c.seed, "random seed")->envname("TABNET_SEED");
  cmd->add_option("--workers", c.workers, "worker threads (1 = serial, deterministic)")
      ->envname("TABNET_WORKERS")
      ->check(CLI::PositiveNumber);
  auto* o = cmd->add_option("--out", c.out, "output path")->envname("TABNET_OUT");
  if (out_required) o->required();
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return nlohmann::json::parse(in);
}

void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

/// Reads `section` of the config file into T; absent file or section keeps defaults.
template <typename T>
T config_section(const nlohmann::json& root, const char* section) {
  T value{};
  if (root.contains(section)) root.at(section).get_to(value);
  return value;
}

int cmd_synth(const Common& c, int count) {
  datagen::SynthConfig cfg;
  if (!c.config.empty()) read_json(c.config).get_to(cfg);
  cfg.validate();
  fs::create_directories(c.out);
  RunManifest m{"synth", c.config, cfg, c.seed, {}, {c.out}, {}, kVersion};
  write_manifest(m, (fs::path(c.out) / "run_manifest.json").string());
  datagen::write_corpus(c.out, cfg, count, c.seed);
  std::cout << "wrote " << count << " pages to " << c.out << '\n';
  return 0;
}

int cmd_train(const Common& c, const std::string& model, const std::string& corpus_dir, int log_every) {
  const nlohmann::json root = c.config.empty() ? nlohmann::json::object() : read_json(c.config);
  for (const auto& [key, value] : root.items())
    if (key != "train" && key != "model") throw std::invalid_argument("unknown config section: " + key);
  auto train = config_section<trainer::TrainConfig>(root, "train");
  train.seed = c.seed;
  train.validate();
  const auto corpus = datagen::list_corpus(corpus_dir);
  fs::create_directories(c.out);
  const std::string ckpt = (fs::path(c.out) / "model.pt").string();
  const std::string csv = (fs::path(c.out) / "loss.csv").string();
  auto log = [&](const trainer::LossRecord& r) {
    if (log_every > 0 && (r.iteration % log_every == 0)) {
      std::cout << "iter " << r.iteration;
      for (double v : r.terms) std::cout << ' ' << v;
      std::cout << " lr " << r.lr << std::endl;
    }
  };
  torch::set_num_threads(c.workers);
  RunManifest m{"train " + model, c.config, {}, c.seed, {corpus_dir}, {ckpt, csv}, {}, kVersion};
  trainer::TrainTrace trace;
  if (model == "det") {
    const auto mcfg = config_section<detector::DetectorConfig>(root, "model");
    m.config = {{"train", train}, {"model", mcfg}};
    write_manifest(m, (fs::path(c.out) / "run_manifest.json").string());
    torch::manual_seed(c.seed);
    detector::TableDetector net(mcfg);
    trace = trainer::train_detector(net, corpus, train, log);
    nn::save_detector(ckpt, net);
  } else {
    const auto mcfg = config_section<tsr::TsrConfig>(root, "model");
    m.config = {{"train", train}, {"model", mcfg}};
    write_manifest(m, (fs::path(c.out) / "run_manifest.json").string());
    torch::manual_seed(c.seed);
    tsr::TsrModel net(mcfg);
    trace = trainer::train_tsr(net, corpus, train, log);
    nn::save_tsr(ckpt, net);
  }
  trace.write_csv(csv);
  std::cout << "saved " << ckpt << '\n';
  return 0;
}

/// Text boxes (with evaluation numbering) from a matching annotation, if any.
std::vector<Box> text_boxes_for(const std::string& gt_dir, const std::string& stem) {
  if (gt_dir.empty()) return {};
  for (const fs::path& p : {fs::path(gt_dir) / "annotations" / (stem + ".json"), fs::path(gt_dir) / (stem + ".json")})
    if (fs::exists(p)) return metrics::table_text_boxes(load_annotation(p.string()));
  return {};
}

int cmd_infer(const Common& c, const std::vector<std::string>& images, const std::string& det_path,
              const std::string& tsr_path, const std::string& gt_dir, bool html) {
  auto det = nn::load_detector(det_path);
  auto tsr = nn::load_tsr(tsr_path);
  det->eval();
  tsr->eval();
  fs::create_directories(c.out);
  RunManifest m{"infer", c.config, {{"detector", det->config}, {"tsr", tsr->config}}, c.seed, images, {c.out},
                {{det_path, file_id(det_path)}, {tsr_path, file_id(tsr_path)}}, kVersion};
  write_manifest(m, (fs::path(c.out) / "run_manifest.json").string());
  torch::set_num_threads(1);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex log_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < images.size(); i = next++) {
      try {
        const cv::Mat img = cv::imread(images[i], cv::IMREAD_COLOR);
        if (img.empty()) throw std::runtime_error("cannot read " + images[i]);
        const std::string stem = fs::path(images[i]).stem().string();
        const auto boxes = text_boxes_for(gt_dir, stem);
        const auto out = pipeline::run_page(det, tsr, img, fs::path(images[i]).filename().string(), boxes);
        write_json(out.result, (fs::path(c.out) / (stem + ".json")).string());
        if (html) {
          std::ofstream h(fs::path(c.out) / (stem + ".html"));
          for (const auto& t : out.result.tables) h << to_html(t.structure) << '\n';
        }
        std::lock_guard lock(log_mutex);
        std::cout << stem << ": " << out.result.tables.size() << " table(s)\n";
        for (const auto& d : out.diagnostics) std::cout << "  " << d << '\n';
      } catch (const std::exception& e) {
        std::lock_guard lock(log_mutex);
        std::cerr << images[i] << ": " << e.what() << '\n';
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < c.workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return failed ? 1 : 0;
}

int cmd_eval(const Common& c, const std::string& pred_dir, const std::string& gt_dir) {
  RunManifest m{"eval", c.config, {}, c.seed, {pred_dir, gt_dir}, {c.out}, {}, kVersion};
  write_manifest(m, c.out + ".run_manifest.json");
  std::vector<metrics::PageEval> pages;
  for (const auto& e : datagen::list_corpus(gt_dir)) {
    const auto doc = load_annotation(e.annotation_path);
    const std::string name = fs::path(e.image_path).filename().string();
    const fs::path pred_file = fs::path(pred_dir) / (fs::path(e.image_path).stem().string() + ".json");
    PageResult pred;
    pred.image = name;
    if (fs::exists(pred_file)) read_json(pred_file.string()).get_to(pred);
    const auto gt = metrics::page_result_from_annotation(doc, name);
    pages.push_back(metrics::evaluate_page(pred, gt, metrics::table_text_boxes(doc)));
  }
  const auto report = metrics::summarize(std::move(pages));
  write_json(metrics::to_json(report), c.out);
  std::cout << "wavg F1 " << report.wavg_f1 << ", adjacency F1 " << report.mean_adjacency_f1 << ", TEDS-Struct "
            << report.mean_teds_struct << '\n';
  return 0;
}

void draw_quad(cv::Mat& img, const QuadBox& q, const cv::Scalar& color, int thickness) {
  std::vector<cv::Point> pts;
  for (const auto& p : q.pts) pts.emplace_back(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)));
  cv::polylines(img, pts, true, color, thickness, cv::LINE_AA);
}

int cmd_overlay(const Common& c, const std::string& image_path, const std::string& result_path,
                const std::string& tsr_path) {
  RunManifest m{"overlay", c.config, {}, c.seed, {image_path, result_path}, {c.out}, {}, kVersion};
  if (!tsr_path.empty()) m.checkpoints[tsr_path] = file_id(tsr_path);
  write_manifest(m, c.out + ".run_manifest.json");
  cv::Mat img = cv::imread(image_path, cv::IMREAD_COLOR);
  if (img.empty()) throw std::runtime_error("cannot read " + image_path);
  const auto result = read_json(result_path).get<PageResult>();
  std::optional<tsr::TsrModel> model;
  if (!tsr_path.empty()) {
    model = nn::load_tsr(tsr_path);
    (*model)->eval();
  }
  cv::Mat canvas = img.clone();
  for (const auto& t : result.tables) {
    if (model) {
      // Separator heatmaps: rows in red, columns in blue.
      const Crop crop = crop_and_resize(img, t.quad, (*model)->config.longer_side);
      torch::NoGradGuard guard;
      const auto out = (*model)->split(nn::image_to_tensor(pad_to_multiple(crop.image, 32)));
      auto up = [&](const torch::Tensor& mask) {
        const auto p = splitter::to_prob_map(mask);
        cv::Mat m(p.height, p.width, CV_32F, const_cast<float*>(p.data.data()));
        cv::Mat full;
        cv::resize(m, full, cv::Size(static_cast<int>(out.p2.size(3)) * 4, static_cast<int>(out.p2.size(2)) * 4), 0, 0,
                   cv::INTER_LINEAR);
        cv::Mat cropped = full(cv::Rect(0, 0, crop.image.cols, crop.image.rows));
        cv::Mat back;
        cv::resize(cropped, back, cv::Size(static_cast<int>(crop.region.w), static_cast<int>(crop.region.h)));
        return back;
      };
      const cv::Mat rows = up(out.row[0][0]), cols = up(out.col[0][0]);
      const cv::Rect roi(static_cast<int>(crop.region.x), static_cast<int>(crop.region.y), rows.cols, rows.rows);
      cv::Mat patch = canvas(roi);
      for (int y = 0; y < patch.rows; ++y)
        for (int x = 0; x < patch.cols; ++x) {
          auto& px = patch.at<cv::Vec3b>(y, x);
          const float r = rows.at<float>(y, x), b = cols.at<float>(y, x);
          px[2] = cv::saturate_cast<uchar>(px[2] * (1 - 0.5 * r) + 255 * 0.5 * r);
          px[0] = cv::saturate_cast<uchar>(px[0] * (1 - 0.5 * b) + 255 * 0.5 * b);
        }
    }
    for (const auto& cell : t.structure.cells) {
      const bool merged = cell.span.row_span() > 1 || cell.span.col_span() > 1;
      draw_quad(canvas, cell.quad, merged ? cv::Scalar(0, 160, 0) : cv::Scalar(200, 120, 0), merged ? 2 : 1);
    }
    draw_quad(canvas, t.quad, cv::Scalar(0, 0, 255), 2);
    const auto& p = t.quad.pts[0];
    cv::putText(canvas, cv::format("%.2f", t.score), cv::Point(static_cast<int>(p.x), std::max(12, static_cast<int>(p.y) - 4)),
                cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 255), 1, cv::LINE_AA);
  }
  if (!cv::imwrite(c.out, canvas)) throw std::runtime_error("cannot write " + c.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabnet: table detection and structure recognition"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common synth_c, train_c, infer_c, eval_c, overlay_c;
  int count = 20;
  auto* synth = app.add_subcommand("synth", "generate a synthetic annotated corpus");
  add_common(synth, synth_c);
  synth->add_option("--count", count, "number of pages")->check(CLI::PositiveNumber);

  std::string model, corpus;
  int log_every = 50;
  auto* train = app.add_subcommand("train", "train the detector (det) or the structure recognizer (tsr)");
  add_common(train, train_c);
  train->add_option("model", model, "det or tsr")->required()->check(CLI::IsMember({"det", "tsr"}));
  train->add_option("--corpus", corpus, "corpus directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--log-every", log_every, "print losses every N iterations (0 = quiet)");

  std::vector<std::string> images;
  std::string det_path, tsr_path, gt_dir;
  bool html = false;
  auto* infer = app.add_subcommand("infer", "run the full pipeline on page images");
  add_common(infer, infer_c);
  infer->add_option("images", images, "page images")->required()->check(CLI::ExistingFile);
  infer->add_option("--detector", det_path, "detector checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--tsr", tsr_path, "structure recognizer checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--text-boxes", gt_dir, "corpus whose annotations supply text boxes for content assignment");
  infer->add_flag("--html", html, "also write HTML per page");

  std::string pred_dir, eval_gt;
  auto* eval = app.add_subcommand("eval", "score predictions against an annotated corpus");
  add_common(eval, eval_c);
  eval->add_option("--pred", pred_dir, "prediction directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--gt", eval_gt, "annotated corpus directory")->required()->check(CLI::ExistingDirectory);

  std::string ov_image, ov_result, ov_tsr;
  auto* overlay = app.add_subcommand("overlay", "draw a page result onto its image");
  add_common(overlay, overlay_c);
  overlay->add_option("--image", ov_image, "page image")->required()->check(CLI::ExistingFile);
  overlay->add_option("--result", ov_result, "pipeline JSON")->required()->check(CLI::ExistingFile);
  overlay->add_option("--tsr", ov_tsr, "recognizer checkpoint for separator heatmaps")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(synth_c, count);
    if (*train) return cmd_train(train_c, model, corpus, log_every);
    if (*infer) return cmd_infer(infer_c, images, det_path, tsr_path, gt_dir, html);
    if (*eval) return cmd_eval(eval_c, pred_dir, eval_gt);
    if (*overlay) return cmd_overlay(overlay_c, ov_image, ov_result, ov_tsr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
