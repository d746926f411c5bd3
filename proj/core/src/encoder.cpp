#include "siml/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "siml/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace siml::encoder {

EncoderParams init_params(const EncoderConfig& config, numkit::Rng& rng) {
  if (config.dim < 2 || config.grid_h < 1 || config.grid_w < 1) {
    throw Error(Errc::invalid_config, "encoder needs dim >= 2 and a nonempty grid");
  }
  EncoderParams params;
  params.dim = config.dim;
  params.grid_h = config.grid_h;
  params.grid_w = config.grid_w;
  const int in_dim = params.input_dim();
  params.weights = numkit::Mat(static_cast<std::size_t>(config.dim),
                               static_cast<std::size_t>(in_dim));
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (double& w : params.weights.data) {
    w = scale * rng.normal();
  }
  return params;
}

numkit::Vec grid_pool(const Image& image, int grid_h, int grid_w) {
  if (image.height < grid_h || image.width < grid_w) {
    throw Error(Errc::image_too_small, std::to_string(image.width) + "x" +
                                           std::to_string(image.height) + " below grid " +
                                           std::to_string(grid_w) + "x" +
                                           std::to_string(grid_h));
  }
  const int cell_h = image.height / grid_h;
  const int cell_w = image.width / grid_w;
  numkit::Vec pooled(static_cast<std::size_t>(3 * grid_h * grid_w), 0.0);
  for (int gy = 0; gy < grid_h; ++gy) {
    const int y0 = gy * cell_h;
    const int y1 = (gy == grid_h - 1) ? image.height : y0 + cell_h;
    for (int gx = 0; gx < grid_w; ++gx) {
      const int x0 = gx * cell_w;
      const int x1 = (gx == grid_w - 1) ? image.width : x0 + cell_w;
      double acc[3] = {0.0, 0.0, 0.0};
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          for (int c = 0; c < 3; ++c) acc[c] += image.at(y, x, c);
        }
      }
      const double inv = 1.0 / (static_cast<double>(y1 - y0) * (x1 - x0));
      const std::size_t base = static_cast<std::size_t>(gy * grid_w + gx) * 3;
      for (int c = 0; c < 3; ++c) pooled[base + static_cast<std::size_t>(c)] = acc[c] * inv;
    }
  }
  return pooled;
}

ForwardTrace forward_pooled(const EncoderParams& params, numkit::Vec pooled) {
  if (pooled.size() != static_cast<std::size_t>(params.input_dim())) {
    throw Error(Errc::dim_mismatch, "pooled vector does not match the encoder grid");
  }
  ForwardTrace trace;
  trace.pooled = std::move(pooled);
  const std::size_t dim = static_cast<std::size_t>(params.dim);
  trace.pre_norm.assign(dim, 0.0);
  for (std::size_t r = 0; r < dim; ++r) {
    trace.pre_norm[r] = numkit::dot(params.weights.row_span(r), trace.pooled);
  }
  trace.norm = numkit::norm(trace.pre_norm);
  if (trace.norm <= numkit::kNormEps) {
    throw Error(Errc::degenerate_norm, "pre-normalization output has no direction");
  }
  trace.feature.assign(dim, 0.0);
  for (std::size_t r = 0; r < dim; ++r) trace.feature[r] = trace.pre_norm[r] / trace.norm;
  return trace;
}

ForwardTrace forward(const EncoderParams& params, const Image& image) {
  return forward_pooled(params, grid_pool(image, params.grid_h, params.grid_w));
}

void accumulate_backward(const EncoderParams& params, const ForwardTrace& trace,
                         const numkit::Vec& dloss_dfeature, double weight,
                         numkit::Mat& dweights) {
  const std::size_t dim = static_cast<std::size_t>(params.dim);
  if (dloss_dfeature.size() != dim) {
    throw Error(Errc::dim_mismatch, "feature gradient size mismatch");
  }
  const double radial = numkit::dot(trace.feature, dloss_dfeature);
  for (std::size_t r = 0; r < dim; ++r) {
    const double du = weight * (dloss_dfeature[r] - trace.feature[r] * radial) / trace.norm;
    if (du == 0.0) continue;
    double* grow = dweights.row(r);
    for (std::size_t c = 0; c < trace.pooled.size(); ++c) {
      grow[c] += du * trace.pooled[c];
    }
  }
}

numkit::Mat backward(const EncoderParams& params, const ForwardTrace& trace,
                     const numkit::Vec& dloss_dfeature) {
  numkit::Mat grad(params.weights.rows, params.weights.cols, 0.0);
  accumulate_backward(params, trace, dloss_dfeature, 1.0, grad);
  return grad;
}

SgdState init_sgd(const SgdConfig& config, const EncoderParams& params) {
  if (config.learning_rate < 0.0 || config.momentum < 0.0 || config.momentum >= 1.0) {
    throw Error(Errc::invalid_config, "need learning_rate >= 0 and momentum in [0, 1)");
  }
  SgdState state;
  state.config = config;
  state.velocity = numkit::Mat(params.weights.rows, params.weights.cols, 0.0);
  return state;
}

double learning_rate_at(const SgdConfig& config, int epoch) {
  double lr = config.learning_rate;
  for (int decay_epoch : config.decay_epochs) {
    if (epoch >= decay_epoch) lr *= config.decay_factor;
  }
  return lr;
}

void sgd_step(EncoderParams& params, SgdState& state, const numkit::Mat& grad, int epoch) {
  if (grad.rows != params.weights.rows || grad.cols != params.weights.cols) {
    throw Error(Errc::dim_mismatch, "gradient shape does not match weights");
  }
  const double lr = learning_rate_at(state.config, epoch);
  for (std::size_t i = 0; i < params.weights.data.size(); ++i) {
    double& v = state.velocity.data[i];
    v = state.config.momentum * v + grad.data[i] +
        state.config.weight_decay * params.weights.data[i];
    params.weights.data[i] -= lr * v;
  }
}

namespace {

void write_doubles(std::ofstream& out, const std::vector<double>& values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& values) {
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::string& path, const EncoderParams& params,
                     const SgdState& sgd, int epoch) {
  nlohmann::ordered_json header;
  header["dim"] = params.dim;
  header["grid_h"] = params.grid_h;
  header["grid_w"] = params.grid_w;
  header["epoch"] = epoch;
  header["learning_rate"] = sgd.config.learning_rate;
  header["momentum"] = sgd.config.momentum;
  header["weight_decay"] = sgd.config.weight_decay;
  header["decay_epochs"] = sgd.config.decay_epochs;
  header["decay_factor"] = sgd.config.decay_factor;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_failure, "cannot open " + path + " for writing");
  const std::uint32_t len = static_cast<std::uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_doubles(out, params.weights.data);
  write_doubles(out, sgd.velocity.data);
  if (!out) throw Error(Errc::io_failure, "short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path);
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len == 0 || len > (1u << 20)) {
    throw Error(Errc::checkpoint_mismatch, "bad header length in " + path);
  }
  std::string text(len, '\0');
  in.read(text.data(), len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::checkpoint_mismatch, std::string("bad header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.params.dim = header.at("dim").get<int>();
    ckpt.params.grid_h = header.at("grid_h").get<int>();
    ckpt.params.grid_w = header.at("grid_w").get<int>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.sgd.config.learning_rate = header.at("learning_rate").get<double>();
    ckpt.sgd.config.momentum = header.at("momentum").get<double>();
    ckpt.sgd.config.weight_decay = header.at("weight_decay").get<double>();
    ckpt.sgd.config.decay_epochs = header.at("decay_epochs").get<std::vector<int>>();
    ckpt.sgd.config.decay_factor = header.at("decay_factor").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::checkpoint_mismatch, std::string("incomplete header: ") + e.what());
  }
  if (ckpt.params.dim < 2 || ckpt.params.grid_h < 1 || ckpt.params.grid_w < 1) {
    throw Error(Errc::checkpoint_mismatch, "nonsensical dims in " + path);
  }
  const std::size_t rows = static_cast<std::size_t>(ckpt.params.dim);
  const std::size_t cols = static_cast<std::size_t>(ckpt.params.input_dim());
  ckpt.params.weights = numkit::Mat(rows, cols);
  ckpt.sgd.velocity = numkit::Mat(rows, cols);
  read_doubles(in, ckpt.params.weights.data);
  read_doubles(in, ckpt.sgd.velocity.data);
  if (!in) throw Error(Errc::checkpoint_mismatch, "truncated payload in " + path);
  in.peek();
  if (!in.eof()) throw Error(Errc::checkpoint_mismatch, "trailing bytes in " + path);
  return ckpt;
}

}  // namespace siml::encoder
