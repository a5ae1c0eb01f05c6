#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "noisyseg/core.hpp"
#include "noisyseg/nn.hpp"
#include "noisyseg/rng.hpp"

namespace noisyseg {

struct ParamSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Uniform contract for anything the optimizer updates: a flat parameter
// vector with named segments and a gradient vector of the same layout.
class TrainableFunction {
public:
  virtual ~TrainableFunction() = default;
  virtual std::size_t parameter_count() const = 0;
  virtual std::span<const double> parameters() const = 0;
  virtual void set_parameters(std::span<const double> params) = 0;
  virtual std::span<const double> gradients() const = 0;
  virtual void zero_gradients() = 0;
  virtual std::vector<ParamSegment> parameter_segments() const = 0;
};

// Stand-in for a full-scale segmentation backbone: a few same-resolution
// convolutions with tanh between them, softmax over classes at the end.
struct SegNetConfig {
  std::vector<int> channels{8, 8};
  int kernel_size = 3;
  int num_classes = 2;
  int in_channels = 3;
  std::uint64_t seed = 0;

  ValidationReport check() const {
    if (channels.empty())
      return ValidationReport::fail("SegNetConfig: need at least one hidden layer width");
    for (int c : channels)
      if (c < 1) return ValidationReport::fail("SegNetConfig: layer width must be >= 1");
    if (kernel_size < 1 || kernel_size % 2 == 0)
      return ValidationReport::fail("SegNetConfig: kernel_size must be odd and >= 1");
    if (num_classes < 2) return ValidationReport::fail("SegNetConfig: num_classes must be >= 2");
    if (in_channels != 1 && in_channels != 3)
      return ValidationReport::fail("SegNetConfig: in_channels must be 1 or 3");
    return ValidationReport::pass();
  }
};

// Stand-in for the weighting CNN: pools the image down, convolves, projects
// to one channel per expert, upsamples bilinearly back to the input grid and
// normalizes across experts per pixel. The final layer starts at zero so the
// initial weights are the uniform prior 1/N.
struct WeightNetConfig {
  std::vector<int> channels{8};
  int num_experts = 1;
  int downsample_factor = 4;
  int in_channels = 3;
  std::uint64_t seed = 0;

  ValidationReport check() const {
    if (channels.empty())
      return ValidationReport::fail("WeightNetConfig: need at least one hidden layer width");
    for (int c : channels)
      if (c < 1) return ValidationReport::fail("WeightNetConfig: layer width must be >= 1");
    if (num_experts < 1)
      return ValidationReport::fail("WeightNetConfig: num_experts must be >= 1");
    if (downsample_factor < 1 || (downsample_factor & (downsample_factor - 1)) != 0)
      return ValidationReport::fail("WeightNetConfig: downsample_factor must be a power of two");
    if (in_channels != 1 && in_channels != 3)
      return ValidationReport::fail("WeightNetConfig: in_channels must be 1 or 3");
    return ValidationReport::pass();
  }
};

namespace detail {

// Shared machinery of both nets: optional input pooling, a conv+tanh chain,
// a linear projection, optional bilinear upsample back to the input grid,
// and a per-pixel channel softmax.
class ConvStack {
public:
  ConvStack() = default;

  ConvStack(int in_channels, const std::vector<int>& hidden, int out_channels, int ksize,
            int pool_steps, bool upsample_to_input, bool zero_init_final, std::uint64_t seed)
      : pool_steps_(pool_steps), upsample_to_input_(upsample_to_input) {
    int prev = in_channels;
    for (int width : hidden) {
      shapes_.push_back({prev, width, ksize});
      prev = width;
    }
    shapes_.push_back({prev, out_channels, ksize});

    std::size_t total = 0;
    for (const auto& s : shapes_) total += s.param_count();
    params_.assign(total, 0.0);
    grads_.assign(total, 0.0);

    std::size_t offset = 0;
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      const bool last = i + 1 == shapes_.size();
      Rng rng = Rng::keyed(seed, i);
      const double stddev =
          1.0 / std::sqrt(static_cast<double>(shapes_[i].in_ch) * ksize * ksize);
      for (std::size_t j = 0; j < shapes_[i].weight_count(); ++j)
        params_[offset + j] = (last && zero_init_final) ? 0.0 : rng.normal(0.0, stddev);
      offset += shapes_[i].param_count();  // biases stay zero
    }
  }

  nn::Tensor3 forward(const nn::Tensor3& input) {
    input_h_ = input.h;
    input_w_ = input.w;

    nn::Tensor3 x = input;
    for (int s = 0; s < pool_steps_; ++s) x = nn::avgpool2_forward(x);

    conv_inputs_.clear();
    tanh_outputs_.clear();
    std::size_t offset = 0;
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      conv_inputs_.push_back(x);
      const auto& s = shapes_[i];
      x = nn::conv2d_forward(x, s, weight_span(offset, s), bias_span(offset, s));
      offset += s.param_count();
      if (i + 1 < shapes_.size()) {
        x = nn::tanh_forward(x);
        tanh_outputs_.push_back(x);
      }
    }

    low_h_ = x.h;
    low_w_ = x.w;
    if (upsample_to_input_ && (x.h != input_h_ || x.w != input_w_))
      x = nn::bilinear_upsample_forward(x, input_h_, input_w_);

    probs_ = nn::channel_softmax_forward(x);
    has_forward_ = true;
    return probs_;
  }

  // g_probs is d loss / d softmax output. Parameter gradients accumulate
  // into the flat gradient vector.
  void backward(const nn::Tensor3& g_probs) {
    require(has_forward_, "ConvStack: backward called before forward");
    nn::Tensor3 g = nn::channel_softmax_backward(probs_, g_probs);
    if (upsample_to_input_ && (low_h_ != input_h_ || low_w_ != input_w_))
      g = nn::bilinear_upsample_backward(low_h_, low_w_, g);

    std::vector<std::size_t> offsets(shapes_.size());
    std::size_t offset = 0;
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      offsets[i] = offset;
      offset += shapes_[i].param_count();
    }

    for (int i = static_cast<int>(shapes_.size()) - 1; i >= 0; --i) {
      if (i + 1 < static_cast<int>(shapes_.size()))
        g = nn::tanh_backward(tanh_outputs_[i], g);
      const auto& s = shapes_[i];
      g = nn::conv2d_backward(conv_inputs_[i], g, s, weight_span(offsets[i], s),
                              grad_weight_span(offsets[i], s), grad_bias_span(offsets[i], s));
    }
    // gradient w.r.t. the image itself is not needed; pooling backward is
    // therefore skipped
  }

  std::size_t parameter_count() const { return params_.size(); }
  std::span<const double> parameters() const { return params_; }
  void set_parameters(std::span<const double> p) {
    require(p.size() == params_.size(), "ConvStack: parameter vector size mismatch");
    std::copy(p.begin(), p.end(), params_.begin());
  }
  std::span<const double> gradients() const { return grads_; }
  void zero_gradients() { std::fill(grads_.begin(), grads_.end(), 0.0); }

  std::vector<ParamSegment> parameter_segments() const {
    std::vector<ParamSegment> segs;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      segs.push_back({"conv" + std::to_string(i) + ".weight", offset, shapes_[i].weight_count()});
      segs.push_back({"conv" + std::to_string(i) + ".bias", offset + shapes_[i].weight_count(),
                      static_cast<std::size_t>(shapes_[i].out_ch)});
      offset += shapes_[i].param_count();
    }
    return segs;
  }

  const nn::Tensor3& last_probs() const { return probs_; }

private:
  std::span<const double> weight_span(std::size_t offset, const nn::ConvShape& s) const {
    return {params_.data() + offset, s.weight_count()};
  }
  std::span<const double> bias_span(std::size_t offset, const nn::ConvShape& s) const {
    return {params_.data() + offset + s.weight_count(), static_cast<std::size_t>(s.out_ch)};
  }
  std::span<double> grad_weight_span(std::size_t offset, const nn::ConvShape& s) {
    return {grads_.data() + offset, s.weight_count()};
  }
  std::span<double> grad_bias_span(std::size_t offset, const nn::ConvShape& s) {
    return {grads_.data() + offset + s.weight_count(), static_cast<std::size_t>(s.out_ch)};
  }

  std::vector<nn::ConvShape> shapes_;
  std::vector<double> params_;
  std::vector<double> grads_;
  int pool_steps_ = 0;
  bool upsample_to_input_ = false;

  // forward cache
  std::vector<nn::Tensor3> conv_inputs_;
  std::vector<nn::Tensor3> tanh_outputs_;
  nn::Tensor3 probs_;
  int input_h_ = 0, input_w_ = 0, low_h_ = 0, low_w_ = 0;
  bool has_forward_ = false;
};

inline nn::Tensor3 image_to_tensor(const ImageTensor& img) {
  nn::Tensor3 t(img.channels(), img.height(), img.width());
  std::copy(img.values().begin(), img.values().end(), t.v.begin());
  return t;
}

}  // namespace detail

class SegNet : public TrainableFunction {
public:
  explicit SegNet(const SegNetConfig& cfg) : cfg_(cfg) {
    detail::enforce(cfg.check());
    stack_ = detail::ConvStack(cfg.in_channels, cfg.channels, cfg.num_classes, cfg.kernel_size,
                               /*pool_steps=*/0, /*upsample_to_input=*/false,
                               /*zero_init_final=*/false, cfg.seed);
  }

  const SegNetConfig& config() const { return cfg_; }

  ProbMap forward(const ImageTensor& img) {
    detail::require(img.channels() == cfg_.in_channels, "SegNet: input channel mismatch");
    const nn::Tensor3 probs = stack_.forward(detail::image_to_tensor(img));
    return ProbMap(cfg_.num_classes, img.height(), img.width(),
                   std::vector<double>(probs.v.begin(), probs.v.end()));
  }

  // d_prob is d loss / d probability map, flattened K x H x W.
  void backward(std::span<const double> d_prob) {
    const nn::Tensor3& probs = stack_.last_probs();
    detail::require(d_prob.size() == probs.v.size(),
                    "SegNet: gradient size does not match last forward output");
    nn::Tensor3 g(probs.c, probs.h, probs.w);
    std::copy(d_prob.begin(), d_prob.end(), g.v.begin());
    stack_.backward(g);
  }

  std::size_t parameter_count() const override { return stack_.parameter_count(); }
  std::span<const double> parameters() const override { return stack_.parameters(); }
  void set_parameters(std::span<const double> p) override { stack_.set_parameters(p); }
  std::span<const double> gradients() const override { return stack_.gradients(); }
  void zero_gradients() override { stack_.zero_gradients(); }
  std::vector<ParamSegment> parameter_segments() const override {
    return stack_.parameter_segments();
  }

private:
  SegNetConfig cfg_;
  detail::ConvStack stack_;
};

class WeightNet : public TrainableFunction {
public:
  explicit WeightNet(const WeightNetConfig& cfg) : cfg_(cfg) {
    detail::enforce(cfg.check());
    int pool_steps = 0;
    for (int f = cfg.downsample_factor; f > 1; f /= 2) ++pool_steps;
    stack_ = detail::ConvStack(cfg.in_channels, cfg.channels, cfg.num_experts, /*ksize=*/3,
                               pool_steps, /*upsample_to_input=*/true,
                               /*zero_init_final=*/true, cfg.seed);
  }

  const WeightNetConfig& config() const { return cfg_; }

  WeightHeatmap forward(const ImageTensor& img) {
    detail::require(img.channels() == cfg_.in_channels, "WeightNet: input channel mismatch");
    const nn::Tensor3 probs = stack_.forward(detail::image_to_tensor(img));
    return WeightHeatmap(cfg_.num_experts, img.height(), img.width(),
                         std::vector<double>(probs.v.begin(), probs.v.end()));
  }

  void backward(std::span<const double> d_weights) {
    const nn::Tensor3& probs = stack_.last_probs();
    detail::require(d_weights.size() == probs.v.size(),
                    "WeightNet: gradient size does not match last forward output");
    nn::Tensor3 g(probs.c, probs.h, probs.w);
    std::copy(d_weights.begin(), d_weights.end(), g.v.begin());
    stack_.backward(g);
  }

  std::size_t parameter_count() const override { return stack_.parameter_count(); }
  std::span<const double> parameters() const override { return stack_.parameters(); }
  void set_parameters(std::span<const double> p) override { stack_.set_parameters(p); }
  std::span<const double> gradients() const override { return stack_.gradients(); }
  void zero_gradients() override { stack_.zero_gradients(); }
  std::vector<ParamSegment> parameter_segments() const override {
    return stack_.parameter_segments();
  }

private:
  WeightNetConfig cfg_;
  detail::ConvStack stack_;
};

inline ProbMap seg_forward(SegNet& net, const ImageTensor& img) { return net.forward(img); }
inline WeightHeatmap weight_forward(WeightNet& net, const ImageTensor& img) {
  return net.forward(img);
}

}  // namespace noisyseg
