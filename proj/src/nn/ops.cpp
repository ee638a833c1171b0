#include "tabnet/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace tabnet::nn {

namespace F = torch::nn::functional;

namespace {

torch::Tensor reverse_cummax(const torch::Tensor& x, int64_t dim) {
  return std::get<0>(torch::cummax(x.flip(dim), dim)).flip(dim);
}

}  // namespace

torch::Tensor pool_top(const torch::Tensor& x) { return reverse_cummax(x, 2); }
torch::Tensor pool_left(const torch::Tensor& x) { return reverse_cummax(x, 3); }
torch::Tensor pool_bottom(const torch::Tensor& x) { return std::get<0>(torch::cummax(x, 2)); }
torch::Tensor pool_right(const torch::Tensor& x) { return std::get<0>(torch::cummax(x, 3)); }

torch::Tensor corner_pool(const torch::Tensor& x, CornerKind kind) {
  return kind == CornerKind::TopLeft ? pool_top(x) + pool_left(x) : pool_bottom(x) + pool_right(x);
}

namespace {

/// [count, extent] bilinear weights for sample coordinates `u`.
torch::Tensor interp_matrix(const std::vector<double>& u, int64_t extent, torch::TensorOptions opts) {
  auto m = torch::zeros({static_cast<int64_t>(u.size()), extent}, opts.dtype(torch::kDouble));
  auto acc = m.accessor<double, 2>();
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double v = std::clamp(u[k], 0.0, static_cast<double>(extent - 1));
    const int64_t i0 = static_cast<int64_t>(std::floor(v));
    const int64_t i1 = std::min(i0 + 1, extent - 1);
    const double w1 = v - static_cast<double>(i0);
    acc[k][i0] += 1.0 - w1;
    acc[k][i1] += w1;
  }
  return m;
}

std::vector<double> sample_coords(double lo, double hi, int bins, int sampling) {
  std::vector<double> u;
  const double bin = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b)
    for (int s = 0; s < sampling; ++s) u.push_back(lo + bin * (b + (s + 0.5) / sampling));
  return u;
}

}  // namespace

torch::Tensor roi_align(const torch::Tensor& feature, const std::vector<Box>& boxes,
                        const std::vector<std::int64_t>& batch_index, double stride, int output_size,
                        int sampling) {
  TORCH_CHECK(feature.dim() == 4, "roi_align expects an NCHW feature map");
  TORCH_CHECK(boxes.size() == batch_index.size(), "one batch index per box");
  TORCH_CHECK(stride > 0 && output_size > 0 && sampling > 0, "invalid roi_align parameters");
  const int64_t C = feature.size(1), H = feature.size(2), W = feature.size(3);
  const int64_t n = static_cast<int64_t>(boxes.size());
  if (n == 0) return torch::zeros({0, C, output_size, output_size}, feature.options());

  std::map<int64_t, std::vector<int64_t>> by_batch;
  std::vector<torch::Tensor> ay(boxes.size()), ax(boxes.size());
  for (int64_t k = 0; k < n; ++k) {
    const Box& b = boxes[static_cast<std::size_t>(k)];
    const double x0 = b.x / stride - 0.5, x1 = b.right() / stride - 0.5;
    const double y0 = b.y / stride - 0.5, y1 = b.bottom() / stride - 0.5;
    if (x1 < -0.5 || y1 < -0.5 || x0 > W - 0.5 || y0 > H - 0.5)
      throw std::invalid_argument("roi_align: box lies outside the feature map");
    const auto opts = feature.options();
    ay[k] = interp_matrix(sample_coords(y0, y1, output_size, sampling), H, opts).to(feature.dtype());
    ax[k] = interp_matrix(sample_coords(x0, x1, output_size, sampling), W, opts).to(feature.dtype());
    const int64_t bi = batch_index[static_cast<std::size_t>(k)];
    TORCH_CHECK(bi >= 0 && bi < feature.size(0), "batch index out of range");
    by_batch[bi].push_back(k);
  }

  std::vector<torch::Tensor> parts;
  std::vector<int64_t> order;
  for (const auto& [bi, idx] : by_batch) {
    std::vector<torch::Tensor> ys, xs;
    for (int64_t k : idx) {
      ys.push_back(ay[k]);
      xs.push_back(ax[k]);
      order.push_back(k);
    }
    const auto Ay = torch::stack(ys).unsqueeze(1);                 // [m,1,s,H]
    const auto AxT = torch::stack(xs).transpose(1, 2).unsqueeze(1);  // [m,1,W,s]
    const auto f = feature[bi].unsqueeze(0);                         // [1,C,H,W]
    parts.push_back(torch::matmul(torch::matmul(Ay, f), AxT));       // [m,C,s,s]
  }
  auto sampled = torch::cat(parts, 0);
  std::vector<int64_t> inverse(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inverse[static_cast<std::size_t>(order[i])] = static_cast<int64_t>(i);
  sampled = sampled.index_select(0, torch::tensor(inverse, torch::kLong).to(feature.device()));
  return F::avg_pool2d(sampled, F::AvgPool2dFuncOptions(sampling).stride(sampling));
}

torch::Tensor scnn_propagate(const torch::Tensor& x, const torch::Tensor& weight, Direction direction) {
  const bool horizontal = direction == Direction::LeftToRight || direction == Direction::RightToLeft;
  const bool reverse = direction == Direction::RightToLeft || direction == Direction::BottomToTop;
  const int64_t dim = horizontal ? 3 : 2;
  const int64_t k = horizontal ? weight.size(2) : weight.size(3);
  TORCH_CHECK(k % 2 == 1, "scnn kernel width must be odd");
  const auto pad = horizontal ? std::vector<int64_t>{k / 2, 0} : std::vector<int64_t>{0, k / 2};
  auto slices = x.split(1, dim);
  const int64_t n = static_cast<int64_t>(slices.size());
  std::vector<torch::Tensor> out(slices.size());
  for (int64_t step = 0; step < n; ++step) {
    const int64_t i = reverse ? n - 1 - step : step;
    if (step == 0) {
      out[i] = slices[i];
    } else {
      const int64_t prev = reverse ? i + 1 : i - 1;
      out[i] = slices[i] + torch::relu(F::conv2d(out[prev], weight, F::Conv2dFuncOptions().padding(pad)));
    }
  }
  return torch::cat(out, dim);
}

ScnnImpl::ScnnImpl(int channels, Direction dir, int kernel_width) : direction(dir) {
  if (kernel_width < 1 || kernel_width % 2 == 0) throw std::invalid_argument("scnn kernel width must be odd");
  const bool horizontal = dir == Direction::LeftToRight || dir == Direction::RightToLeft;
  const std::vector<int64_t> shape = horizontal ? std::vector<int64_t>{channels, channels, kernel_width, 1}
                                                : std::vector<int64_t>{channels, channels, 1, kernel_width};
  weight = register_parameter("weight", torch::randn(shape) * 0.01);
}

torch::Tensor ScnnImpl::forward(const torch::Tensor& x) { return scnn_propagate(x, weight, direction); }

DownsampleBlockImpl::DownsampleBlockImpl(int channels, Axis a) : axis(a) {
  conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  init_he(*conv);
}

torch::Tensor DownsampleBlockImpl::forward(const torch::Tensor& x) {
  torch::Tensor y = x;
  const int64_t dim = axis == Axis::Width ? 3 : 2;
  if (y.size(dim) % 2 == 1) {
    const auto pad = axis == Axis::Width ? std::vector<int64_t>{0, 1, 0, 0} : std::vector<int64_t>{0, 0, 0, 1};
    y = F::pad(y, F::PadFuncOptions(pad).mode(torch::kReplicate));
  }
  const auto k = axis == Axis::Width ? std::vector<int64_t>{1, 2} : std::vector<int64_t>{2, 1};
  y = F::max_pool2d(y, F::MaxPool2dFuncOptions(k).stride(k));
  return torch::relu(conv->forward(y));
}

BackboneConfig BackboneConfig::resolved() const {
  BackboneConfig c = *this;
  if (variant == "resnet18") {
    c.channels = {64, 128, 256, 512};
    c.stem_channels = 64;
    c.blocks_per_stage = 2;
  }
  return c;
}

void BackboneConfig::validate() const {
  if (variant != "tiny" && variant != "resnet18")
    throw std::invalid_argument("backbone variant must be \"tiny\" or \"resnet18\"");
  if (channels.size() != 4) throw std::invalid_argument("backbone needs four stage widths");
  for (int c : channels)
    if (c < 1) throw std::invalid_argument("backbone widths must be positive");
  if (stem_channels < 1 || blocks_per_stage < 1 || feature_channels < 1)
    throw std::invalid_argument("backbone counts must be positive");
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = nlohmann::json{{"variant", c.variant},
                     {"channels", c.channels},
                     {"stem_channels", c.stem_channels},
                     {"blocks_per_stage", c.blocks_per_stage},
                     {"feature_channels", c.feature_channels}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "variant") c.variant = value.get<std::string>();
    else if (key == "channels") c.channels = value.get<std::vector<int>>();
    else if (key == "stem_channels") c.stem_channels = value.get<int>();
    else if (key == "blocks_per_stage") c.blocks_per_stage = value.get<int>();
    else if (key == "feature_channels") c.feature_channels = value.get<int>();
    else throw std::invalid_argument("unknown backbone key: " + key);
  }
  c.validate();
}

namespace {

torch::nn::Conv2d conv(int in, int out, int k, int stride = 1, int dilation = 1, bool bias = false) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k)
                               .stride(stride)
                               .padding(dilation * (k / 2))
                               .dilation(dilation)
                               .bias(bias));
}

torch::nn::BatchNorm2d batch_norm(int channels, bool image_stats) {
  return torch::nn::BatchNorm2d(torch::nn::BatchNorm2dOptions(channels).track_running_stats(!image_stats));
}

void init_kaiming(torch::nn::Module& m) {
  torch::NoGradGuard guard;
  for (auto& sub : m.modules(/*include_self=*/false)) {
    if (auto* c = sub->as<torch::nn::Conv2d>()) {
      torch::nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanOut, torch::kReLU);
      if (c->bias.defined()) c->bias.zero_();
    }
  }
}

}  // namespace

BasicBlockImpl::BasicBlockImpl(int in, int out, int stride, int dilation, bool image_stats) {
  conv1 = register_module("conv1", conv(in, out, 3, stride, dilation));
  bn1 = register_module("bn1", batch_norm(out, image_stats));
  conv2 = register_module("conv2", conv(out, out, 3, 1, dilation));
  bn2 = register_module("bn2", batch_norm(out, image_stats));
  if (stride != 1 || in != out) {
    down = register_module("down", conv(in, out, 1, stride));
    down_bn = register_module("down_bn", batch_norm(out, image_stats));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(bn1->forward(conv1->forward(x)));
  y = bn2->forward(conv2->forward(y));
  const auto skip = down ? down_bn->forward(down->forward(x)) : x;
  return torch::relu(y + skip);
}

ResNetImpl::ResNetImpl(const BackboneConfig& config, bool dilate_last, bool image_stats) {
  config.validate();
  const BackboneConfig c = config.resolved();
  stage_channels = c.channels;
  const int stem_kernel = c.variant == "resnet18" ? 7 : 3;
  stem = torch::nn::Sequential(conv(3, c.stem_channels, stem_kernel, 2), batch_norm(c.stem_channels, image_stats),
                               torch::nn::ReLU(),
                               torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(3).stride(2).padding(1)));
  register_module("stem", stem);
  int in = c.stem_channels;
  for (int s = 0; s < 4; ++s) {
    torch::nn::Sequential stage;
    const bool dilated = dilate_last && s == 3;
    const int stride = s == 0 || dilated ? 1 : 2;
    const int dilation = dilated ? 2 : 1;
    for (int b = 0; b < c.blocks_per_stage; ++b) {
      stage->push_back(BasicBlock(in, c.channels[s], b == 0 ? stride : 1, dilation, image_stats));
      in = c.channels[s];
    }
    stages.push_back(register_module("stage" + std::to_string(s + 1), stage));
  }
  init_kaiming(*this);
}

std::vector<torch::Tensor> ResNetImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> out;
  auto y = stem->forward(x);
  for (auto& stage : stages) {
    y = stage->forward(y);
    out.push_back(y);
  }
  return out;
}

namespace {

void check_input(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3) throw std::invalid_argument("expected a [N, 3, H, W] image tensor");
  if (x.size(2) < 32 || x.size(3) < 32) throw std::invalid_argument("image sides must be at least 32 pixels");
}

}  // namespace

DetectorBackboneImpl::DetectorBackboneImpl(const BackboneConfig& config) {
  body = register_module("body", ResNet(config, true));
  reduce = register_module("reduce", conv(body->stage_channels.back(), config.feature_channels, 1, 1, 1, true));
  init_gaussian(*reduce);
}

torch::Tensor DetectorBackboneImpl::forward(const torch::Tensor& x) {
  check_input(x);
  return reduce->forward(body->forward(x).back());
}

TsrBackboneImpl::TsrBackboneImpl(const BackboneConfig& config) {
  // The recognizer trains on one table per forward, so its normalization
  // statistics are per image; running averages would not reproduce them.
  body = register_module("body", ResNet(config, false, /*image_stats=*/true));
  for (int s = 0; s < 4; ++s) {
    lateral.push_back(register_module("lateral" + std::to_string(s + 2),
                                      conv(body->stage_channels[s], config.feature_channels, 1, 1, 1, true)));
  }
  smooth = register_module("smooth", conv(config.feature_channels, config.feature_channels, 3, 1, 1, true));
  for (auto& l : lateral) init_he(*l);
  init_he(*smooth);
}

torch::Tensor TsrBackboneImpl::forward(const torch::Tensor& x) {
  check_input(x);
  if (x.size(2) % 32 != 0 || x.size(3) % 32 != 0)
    throw std::invalid_argument("TSR input sides must be multiples of 32");
  const auto c = body->forward(x);
  auto p = lateral[3]->forward(c[3]);
  for (int s = 2; s >= 0; --s) {
    const auto lat = lateral[s]->forward(c[s]);
    p = lat + F::interpolate(p, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{lat.size(2), lat.size(3)})
                                    .mode(torch::kNearest));
  }
  return smooth->forward(p);
}

void init_gaussian(torch::nn::Module& m, double std) {
  torch::NoGradGuard guard;
  for (auto& p : m.named_parameters(/*recurse=*/true)) {
    if (p.key().find("bias") != std::string::npos) {
      p.value().zero_();
    } else {
      p.value().normal_(0.0, std);
    }
  }
}

void init_he(torch::nn::Module& m) {
  torch::NoGradGuard guard;
  for (auto& p : m.named_parameters(/*recurse=*/true)) {
    if (p.value().dim() >= 2) {
      torch::nn::init::kaiming_normal_(p.value(), 0.0, torch::kFanIn, torch::kReLU);
    } else {
      p.value().zero_();
    }
  }
}

torch::Tensor image_to_tensor(const cv::Mat& bgr) {
  if (bgr.empty() || bgr.type() != CV_8UC3) throw std::invalid_argument("expected an 8-bit 3-channel image");
  cv::Mat contiguous = bgr.isContinuous() ? bgr : bgr.clone();
  auto t = torch::from_blob(contiguous.data, {contiguous.rows, contiguous.cols, 3}, torch::kUInt8)
               .to(torch::kFloat)
               .flip(2)
               .permute({2, 0, 1})
               .contiguous();
  return (t / 127.5 - 1.0).unsqueeze(0);
}

}  // namespace tabnet::nn
