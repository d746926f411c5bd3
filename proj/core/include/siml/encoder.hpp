#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "siml/image.hpp"
#include "siml/numkit.hpp"

namespace siml::encoder {

struct EncoderConfig {
  int dim = 32;
  int grid_h = 8;
  int grid_w = 4;
};

/// Linear embedding over adaptive grid-pooled channel means. The same
/// parameters serve every input size, which is what lets one encoder handle
/// all crop scales.
struct EncoderParams {
  int dim = 0;
  int grid_h = 0;
  int grid_w = 0;
  numkit::Mat weights;  // dim x (3 * grid_h * grid_w)

  int input_dim() const { return 3 * grid_h * grid_w; }
};

EncoderParams init_params(const EncoderConfig& config, numkit::Rng& rng);

struct ForwardTrace {
  numkit::Vec pooled;    // 3 * grid_h * grid_w channel means
  numkit::Vec pre_norm;  // u = W * pooled
  double norm = 0.0;     // ||u||
  numkit::Vec feature;   // u / ||u||
};

/// Adaptive mean pooling: the image is split into grid_h x grid_w cells of
/// floor size, remainder rows/columns going to the last cell per axis.
/// Pooled layout: cell-major (row, col), 3 channels per cell.
numkit::Vec grid_pool(const Image& image, int grid_h, int grid_w);

ForwardTrace forward(const EncoderParams& params, const Image& image);

/// Forward from an already-pooled vector. Pooling depends only on the input
/// image, so callers encoding the same crop repeatedly may cache it.
ForwardTrace forward_pooled(const EncoderParams& params, numkit::Vec pooled);

/// Chain rule through l2 normalization and the linear map:
///   dL/du = (dL/df - f (f . dL/df)) / ||u||,  dL/dW = outer(dL/du, pooled).
numkit::Mat backward(const EncoderParams& params, const ForwardTrace& trace,
                     const numkit::Vec& dloss_dfeature);
void accumulate_backward(const EncoderParams& params, const ForwardTrace& trace,
                         const numkit::Vec& dloss_dfeature, double weight,
                         numkit::Mat& dweights);

struct SgdConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> decay_epochs = {16, 22};
  double decay_factor = 0.1;
};

struct SgdState {
  SgdConfig config;
  numkit::Mat velocity;
};

SgdState init_sgd(const SgdConfig& config, const EncoderParams& params);

/// Base rate times decay_factor once per configured epoch already reached.
double learning_rate_at(const SgdConfig& config, int epoch);

/// v <- momentum v + grad + weight_decay W;  W <- W - lr(epoch) v.
void sgd_step(EncoderParams& params, SgdState& state, const numkit::Mat& grad, int epoch);

struct Checkpoint {
  EncoderParams params;
  SgdState sgd;
  int epoch = 0;
};

/// Length-prefixed JSON header (dims, epoch, schedule) followed by the weight
/// and velocity matrices as flat little-endian 64-bit reals.
void save_checkpoint(const std::string& path, const EncoderParams& params,
                     const SgdState& sgd, int epoch);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace siml::encoder
