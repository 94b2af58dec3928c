#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cxr/tensor.hpp"

namespace cxr {

// Residual block: conv3x3 -> ReLU -> conv3x3 -> ReLU, the result
// channel-concatenated with the block input, then max-pool 2x2 (stride 2)
// and instance normalization. Output channels = conv channels + input
// channels.
//
// Head: ReLU -> global average pool -> dense (ReLU) -> dense -> softmax.
// The ReLU before pooling is load-bearing: instance norm zeroes each
// channel's spatial mean, so averaging the raw block output would give a
// constant zero vector regardless of the input.
struct NetworkSpec {
  std::vector<int> block_channels{16, 32, 64, 128, 256};
  int dense_units = 128;
  int num_classes = 2;
  int in_channels = 3;
  int in_height = 331;
  int in_width = 331;
};

struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  Tensor w;  // (out, in, 3, 3)
  Tensor b;  // (out, 1, 1, 1)
  bool frozen = false;
};

struct DenseLayer {
  int in_units = 0;
  int out_units = 0;
  Tensor w;  // (out, in, 1, 1)
  Tensor b;  // (out, 1, 1, 1)
  bool frozen = false;
};

struct Network {
  NetworkSpec spec;
  std::vector<ConvLayer> conv1;  // one per block
  std::vector<ConvLayer> conv2;
  DenseLayer fc1;
  DenseLayer fc2;
};

// Channel count after block `b` (0-based); -1 gives the input channels.
int channels_after_block(const NetworkSpec& spec, int b);
// Spatial side length after block `b` for one input dimension.
int extent_after_block(int input_extent, int b);

// He fan-in normal initialization, zero biases, deterministic in init_seed.
Network build_baseline(const NetworkSpec& spec, std::uint64_t init_seed = 17);

struct BlockCache {
  Tensor pre1, act1;
  Tensor pre2, act2;
  Tensor concat;
  Tensor pooled;
  std::vector<std::size_t> pool_argmax;     // flat index into concat
  std::vector<double> norm_mean;            // per (sample, channel)
  std::vector<double> norm_inv_std;
  Tensor out;
};

struct ForwardCache {
  Tensor input;
  std::vector<BlockCache> blocks;
  Tensor head_act;  // ReLU of the last block output, feeds the pool
  Tensor gap;       // (n, channels, 1, 1)
  Tensor fc1_pre;
  Tensor fc1_act;
  Tensor logits;   // (n, num_classes, 1, 1)
};

// Runs the network and returns per-sample class probabilities
// (n, num_classes, 1, 1). Throws ShapeMismatch if batch dims differ from
// the spec.
Tensor forward(const Network& net, const Tensor& batch,
               ForwardCache* cache = nullptr);

// Weighted categorical cross-entropy over the cached forward pass.
// Accumulates d(loss)/d(param) into each layer's grad buffers (zeroed
// first); frozen layers keep zero gradients. Returns the loss.
double backward(Network& net, const ForwardCache& cache,
                const std::vector<int>& targets,
                const std::vector<double>& class_weights);

struct ParamRef {
  std::string name;  // block1.conv1.w, ..., head.fc2.b
  Tensor* tensor;
  bool frozen;
};
std::vector<ParamRef> parameters(Network& net);
std::size_t parameter_count(const Network& net);

// Marks layers as excluded from gradient accumulation and optimizer
// updates. Selectors: blockK, blockK.conv1, blockK.conv2, head, head.fc1,
// head.fc2. Throws UnknownLayer.
void freeze(Network& net, const std::vector<std::string>& selectors);

// Gradient of one sample's target-class logit with respect to the last
// block's output activations, flattened (channel, y, x).
std::vector<double> logit_gradient_last_block(const Network& net,
                                              const ForwardCache& cache,
                                              int sample, int target_class);

// Versioned binary container: magic, format version, JSON architecture
// descriptor, then little-endian doubles per parameter in declaration
// order. Round-trips bit-identically.
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

}  // namespace cxr
