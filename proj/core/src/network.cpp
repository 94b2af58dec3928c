#include "cxr/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cxr/error.hpp"
#include "cxr/metrics.hpp"
#include "cxr/rng.hpp"

namespace cxr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr double kNormEps = 1e-5;

void check_spec(const NetworkSpec& spec) {
  if (spec.block_channels.empty()) {
    throw Error("NetworkSpec: at least one block required");
  }
  for (int c : spec.block_channels) {
    if (c < 1) throw Error("NetworkSpec: block channels must be >= 1");
  }
  if (spec.dense_units < 1 || spec.num_classes < 2 || spec.in_channels < 1 ||
      spec.in_height < 1 || spec.in_width < 1) {
    throw Error("NetworkSpec: invalid head or input dimensions");
  }
  const int b = static_cast<int>(spec.block_channels.size()) - 1;
  if (extent_after_block(spec.in_height, b) < 1 ||
      extent_after_block(spec.in_width, b) < 1) {
    throw Error("NetworkSpec: input too small for the pooling depth");
  }
}

}  // namespace

int channels_after_block(const NetworkSpec& spec, int b) {
  int ch = spec.in_channels;
  for (int i = 0; i <= b && i < static_cast<int>(spec.block_channels.size());
       ++i) {
    ch += spec.block_channels[static_cast<std::size_t>(i)];
  }
  return ch;
}

int extent_after_block(int input_extent, int b) {
  int e = input_extent;
  for (int i = 0; i <= b; ++i) e /= 2;
  return e;
}

Network build_baseline(const NetworkSpec& spec, std::uint64_t init_seed) {
  check_spec(spec);
  Network net;
  net.spec = spec;
  std::uint64_t stream = 0;
  const auto init_conv = [&](int in_ch, int out_ch) {
    ConvLayer layer;
    layer.in_channels = in_ch;
    layer.out_channels = out_ch;
    layer.w = Tensor(out_ch, in_ch, 3, 3);
    layer.b = Tensor(out_ch, 1, 1, 1);
    Rng rng(derive_seed(init_seed, stream++));
    const double stddev = std::sqrt(2.0 / (in_ch * 9.0));
    for (double& v : layer.w.data) v = stddev * rng.normal();
    return layer;
  };
  const auto init_dense = [&](int in_units, int out_units) {
    DenseLayer layer;
    layer.in_units = in_units;
    layer.out_units = out_units;
    layer.w = Tensor(out_units, in_units, 1, 1);
    layer.b = Tensor(out_units, 1, 1, 1);
    Rng rng(derive_seed(init_seed, stream++));
    const double stddev = std::sqrt(2.0 / in_units);
    for (double& v : layer.w.data) v = stddev * rng.normal();
    return layer;
  };
  int ch = spec.in_channels;
  for (int c : spec.block_channels) {
    net.conv1.push_back(init_conv(ch, c));
    net.conv2.push_back(init_conv(c, c));
    ch += c;
  }
  net.fc1 = init_dense(ch, spec.dense_units);
  net.fc2 = init_dense(spec.dense_units, spec.num_classes);
  return net;
}

namespace {

void conv3x3_forward(const Tensor& in, const ConvLayer& layer, Tensor& out) {
  const int n = in.shape[0], ci = in.shape[1], h = in.shape[2],
            w = in.shape[3];
  const int co = layer.out_channels;
  out = Tensor(n, co, h, w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int s = 0; s < n; ++s) {
    for (int o = 0; o < co; ++o) {
      double* outp = out.data.data() + out.index(s, o, 0, 0);
      const double bias = layer.b.data[static_cast<std::size_t>(o)];
      std::fill(outp, outp + plane, bias);
      for (int c = 0; c < ci; ++c) {
        const double* inp = in.data.data() + in.index(s, c, 0, 0);
        for (int ky = 0; ky < 3; ++ky) {
          const int dy = ky - 1;
          const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
          for (int kx = 0; kx < 3; ++kx) {
            const int dx = kx - 1;
            const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
            const double wv = layer.w.at(o, c, ky, kx);
            for (int y = y0; y < y1; ++y) {
              const double* src =
                  inp + static_cast<std::size_t>(y + dy) * w + (x0 + dx);
              double* dst = outp + static_cast<std::size_t>(y) * w + x0;
              for (int x = x0; x < x1; ++x) dst[x - x0] += wv * src[x - x0];
            }
          }
        }
      }
    }
  }
}

// dIn may be null when the input gradient is not needed.
void conv3x3_backward(const Tensor& in, ConvLayer& layer, const Tensor& dout,
                      Tensor* din, bool param_grads) {
  const int n = in.shape[0], ci = in.shape[1], h = in.shape[2],
            w = in.shape[3];
  const int co = layer.out_channels;
  if (param_grads) {
    layer.w.zero_grad();
    layer.b.zero_grad();
  }
  if (din) *din = Tensor(n, ci, h, w);
  for (int s = 0; s < n; ++s) {
    for (int o = 0; o < co; ++o) {
      const double* doutp = dout.data.data() + dout.index(s, o, 0, 0);
      if (param_grads) {
        double acc = 0.0;
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        for (std::size_t i = 0; i < plane; ++i) acc += doutp[i];
        layer.b.grad[static_cast<std::size_t>(o)] += acc;
      }
      for (int c = 0; c < ci; ++c) {
        const double* inp = in.data.data() + in.index(s, c, 0, 0);
        double* dinp =
            din ? din->data.data() + din->index(s, c, 0, 0) : nullptr;
        for (int ky = 0; ky < 3; ++ky) {
          const int dy = ky - 1;
          const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
          for (int kx = 0; kx < 3; ++kx) {
            const int dx = kx - 1;
            const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
            const double wv = layer.w.at(o, c, ky, kx);
            double wgrad = 0.0;
            for (int y = y0; y < y1; ++y) {
              const double* dop = doutp + static_cast<std::size_t>(y) * w + x0;
              const std::size_t src_off =
                  static_cast<std::size_t>(y + dy) * w + (x0 + dx);
              const double* ip = inp + src_off;
              const int len = x1 - x0;
              if (param_grads) {
                for (int x = 0; x < len; ++x) wgrad += dop[x] * ip[x];
              }
              if (dinp) {
                double* dp = dinp + src_off;
                for (int x = 0; x < len; ++x) dp[x] += wv * dop[x];
              }
            }
            if (param_grads) {
              layer.w.grad[layer.w.index(o, c, ky, kx)] += wgrad;
            }
          }
        }
      }
    }
  }
}

void relu_forward(const Tensor& pre, Tensor& act) {
  act = pre;
  for (double& v : act.data) v = std::max(v, 0.0);
}

void relu_backward(const Tensor& pre, Tensor& d) {
  for (std::size_t i = 0; i < d.data.size(); ++i) {
    if (pre.data[i] <= 0.0) d.data[i] = 0.0;
  }
}

void maxpool_forward(const Tensor& in, Tensor& out,
                     std::vector<std::size_t>& argmax) {
  const int n = in.shape[0], c = in.shape[1], h = in.shape[2],
            w = in.shape[3];
  const int oh = h / 2, ow = w / 2;
  out = Tensor(n, c, oh, ow);
  argmax.resize(out.size());
  std::size_t k = 0;
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x, ++k) {
          std::size_t best = in.index(s, ch, 2 * y, 2 * x);
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx = in.index(s, ch, 2 * y + dy, 2 * x + dx);
              if (in.data[idx] > in.data[best]) best = idx;
            }
          }
          out.data[k] = in.data[best];
          argmax[k] = best;
        }
      }
    }
  }
}

void instance_norm_forward(const Tensor& in, Tensor& out,
                           std::vector<double>& mean,
                           std::vector<double>& inv_std) {
  const int n = in.shape[0], c = in.shape[1];
  const std::size_t plane =
      static_cast<std::size_t>(in.shape[2]) * in.shape[3];
  out = Tensor(in.shape[0], in.shape[1], in.shape[2], in.shape[3]);
  mean.resize(static_cast<std::size_t>(n) * c);
  inv_std.resize(static_cast<std::size_t>(n) * c);
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const double* x = in.data.data() + in.index(s, ch, 0, 0);
      double* y = out.data.data() + out.index(s, ch, 0, 0);
      double m = 0.0;
      for (std::size_t i = 0; i < plane; ++i) m += x[i];
      m /= static_cast<double>(plane);
      double var = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = x[i] - m;
        var += d * d;
      }
      var /= static_cast<double>(plane);
      const double inv = 1.0 / std::sqrt(var + kNormEps);
      const std::size_t slot = static_cast<std::size_t>(s) * c + ch;
      mean[slot] = m;
      inv_std[slot] = inv;
      for (std::size_t i = 0; i < plane; ++i) y[i] = (x[i] - m) * inv;
    }
  }
}

void instance_norm_backward(const Tensor& normalized,
                            const std::vector<double>& inv_std,
                            const Tensor& dout, Tensor& din) {
  const int n = normalized.shape[0], c = normalized.shape[1];
  const std::size_t plane =
      static_cast<std::size_t>(normalized.shape[2]) * normalized.shape[3];
  din = Tensor(normalized.shape[0], normalized.shape[1], normalized.shape[2],
               normalized.shape[3]);
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const double* y = normalized.data.data() + normalized.index(s, ch, 0, 0);
      const double* dy = dout.data.data() + dout.index(s, ch, 0, 0);
      double* dx = din.data.data() + din.index(s, ch, 0, 0);
      double mean_dy = 0.0, mean_dyy = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        mean_dy += dy[i];
        mean_dyy += dy[i] * y[i];
      }
      mean_dy /= static_cast<double>(plane);
      mean_dyy /= static_cast<double>(plane);
      const double inv = inv_std[static_cast<std::size_t>(s) * c + ch];
      for (std::size_t i = 0; i < plane; ++i) {
        dx[i] = inv * (dy[i] - mean_dy - y[i] * mean_dyy);
      }
    }
  }
}

void dense_forward(const Tensor& in, const DenseLayer& layer, Tensor& out) {
  const int n = in.shape[0];
  out = Tensor(n, layer.out_units, 1, 1);
  const std::size_t width = in.size() / static_cast<std::size_t>(n);
  for (int s = 0; s < n; ++s) {
    const double* x = in.data.data() + width * static_cast<std::size_t>(s);
    for (int o = 0; o < layer.out_units; ++o) {
      const double* wrow =
          layer.w.data.data() + layer.w.index(o, 0, 0, 0);
      double acc = layer.b.data[static_cast<std::size_t>(o)];
      for (std::size_t i = 0; i < width; ++i) acc += wrow[i] * x[i];
      out.data[out.index(s, o, 0, 0)] = acc;
    }
  }
}

void dense_backward(const Tensor& in, DenseLayer& layer, const Tensor& dout,
                    Tensor& din, bool param_grads) {
  const int n = in.shape[0];
  const std::size_t width = in.size() / static_cast<std::size_t>(n);
  if (param_grads) {
    layer.w.zero_grad();
    layer.b.zero_grad();
  }
  din = Tensor(in.shape[0], in.shape[1], in.shape[2], in.shape[3]);
  for (int s = 0; s < n; ++s) {
    const double* x = in.data.data() + width * static_cast<std::size_t>(s);
    double* dx = din.data.data() + width * static_cast<std::size_t>(s);
    for (int o = 0; o < layer.out_units; ++o) {
      const double g = dout.data[dout.index(s, o, 0, 0)];
      const double* wrow = layer.w.data.data() + layer.w.index(o, 0, 0, 0);
      if (param_grads) {
        double* wg = layer.w.grad.data() + layer.w.index(o, 0, 0, 0);
        for (std::size_t i = 0; i < width; ++i) wg[i] += g * x[i];
        layer.b.grad[static_cast<std::size_t>(o)] += g;
      }
      for (std::size_t i = 0; i < width; ++i) dx[i] += g * wrow[i];
    }
  }
}

void concat_channels(const Tensor& a, const Tensor& b, Tensor& out) {
  const int n = a.shape[0], h = a.shape[2], w = a.shape[3];
  out = Tensor(n, a.shape[1] + b.shape[1], h, w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int s = 0; s < n; ++s) {
    std::copy_n(a.data.data() + a.index(s, 0, 0, 0),
                plane * static_cast<std::size_t>(a.shape[1]),
                out.data.data() + out.index(s, 0, 0, 0));
    std::copy_n(b.data.data() + b.index(s, 0, 0, 0),
                plane * static_cast<std::size_t>(b.shape[1]),
                out.data.data() + out.index(s, a.shape[1], 0, 0));
  }
}

}  // namespace

Tensor forward(const Network& net, const Tensor& batch, ForwardCache* cache) {
  const NetworkSpec& spec = net.spec;
  if (batch.shape[1] != spec.in_channels || batch.shape[2] != spec.in_height ||
      batch.shape[3] != spec.in_width || batch.shape[0] < 1) {
    throw ShapeMismatch("forward: batch dims do not match the network input");
  }
  ForwardCache local;
  ForwardCache& cc = cache ? *cache : local;
  cc.input = batch;
  const std::size_t nblocks = spec.block_channels.size();
  cc.blocks.assign(nblocks, BlockCache());
  const Tensor* x = &cc.input;
  for (std::size_t b = 0; b < nblocks; ++b) {
    BlockCache& bc = cc.blocks[b];
    conv3x3_forward(*x, net.conv1[b], bc.pre1);
    relu_forward(bc.pre1, bc.act1);
    conv3x3_forward(bc.act1, net.conv2[b], bc.pre2);
    relu_forward(bc.pre2, bc.act2);
    concat_channels(bc.act2, *x, bc.concat);
    maxpool_forward(bc.concat, bc.pooled, bc.pool_argmax);
    instance_norm_forward(bc.pooled, bc.out, bc.norm_mean, bc.norm_inv_std);
    x = &bc.out;
  }
  // Rectify, then global average pool. Instance norm leaves each channel
  // with zero spatial mean, so pooling the raw block output would be
  // identically zero; the ReLU keeps the head input-dependent.
  relu_forward(*x, cc.head_act);
  const Tensor& last = cc.head_act;
  const int n = last.shape[0], ch = last.shape[1];
  const std::size_t plane =
      static_cast<std::size_t>(last.shape[2]) * last.shape[3];
  cc.gap = Tensor(n, ch, 1, 1);
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < ch; ++c) {
      const double* p = last.data.data() + last.index(s, c, 0, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      cc.gap.data[cc.gap.index(s, c, 0, 0)] =
          acc / static_cast<double>(plane);
    }
  }
  dense_forward(cc.gap, net.fc1, cc.fc1_pre);
  relu_forward(cc.fc1_pre, cc.fc1_act);
  dense_forward(cc.fc1_act, net.fc2, cc.logits);

  Tensor probs(n, spec.num_classes, 1, 1);
  std::vector<double> row(static_cast<std::size_t>(spec.num_classes));
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < spec.num_classes; ++c) {
      row[static_cast<std::size_t>(c)] = cc.logits.data[cc.logits.index(s, c, 0, 0)];
    }
    const std::vector<double> p = softmax(row);
    for (int c = 0; c < spec.num_classes; ++c) {
      probs.data[probs.index(s, c, 0, 0)] = p[static_cast<std::size_t>(c)];
    }
  }
  return probs;
}

double backward(Network& net, const ForwardCache& cache,
                const std::vector<int>& targets,
                const std::vector<double>& class_weights) {
  const NetworkSpec& spec = net.spec;
  const int n = cache.input.shape[0];
  if (static_cast<int>(targets.size()) != n) {
    throw ShapeMismatch("backward: target count differs from batch size");
  }
  if (static_cast<int>(class_weights.size()) != spec.num_classes) {
    throw ShapeMismatch("backward: weight count differs from class count");
  }
  std::vector<std::vector<double>> logit_rows(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> onehot(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    auto& row = logit_rows[static_cast<std::size_t>(s)];
    row.resize(static_cast<std::size_t>(spec.num_classes));
    for (int c = 0; c < spec.num_classes; ++c) {
      row[static_cast<std::size_t>(c)] =
          cache.logits.data[cache.logits.index(s, c, 0, 0)];
    }
    const int t = targets[static_cast<std::size_t>(s)];
    if (t < 0 || t >= spec.num_classes) {
      throw LabelOutOfRange("backward: target class out of range");
    }
    auto& hot = onehot[static_cast<std::size_t>(s)];
    hot.assign(static_cast<std::size_t>(spec.num_classes), 0.0);
    hot[static_cast<std::size_t>(t)] = 1.0;
  }
  const WceResult wce = wce_loss(logit_rows, onehot, class_weights);

  Tensor dlogits(n, spec.num_classes, 1, 1);
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < spec.num_classes; ++c) {
      dlogits.data[dlogits.index(s, c, 0, 0)] =
          wce.dlogits[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)];
    }
  }

  Tensor dfc1_act;
  dense_backward(cache.fc1_act, net.fc2, dlogits, dfc1_act, !net.fc2.frozen);
  if (net.fc2.frozen) {
    net.fc2.w.zero_grad();
    net.fc2.b.zero_grad();
  }
  relu_backward(cache.fc1_pre, dfc1_act);
  Tensor dgap;
  dense_backward(cache.gap, net.fc1, dfc1_act, dgap, !net.fc1.frozen);
  if (net.fc1.frozen) {
    net.fc1.w.zero_grad();
    net.fc1.b.zero_grad();
  }

  // Spread GAP gradient uniformly over the last block's spatial grid,
  // then gate it by the head ReLU.
  const Tensor& last = cache.blocks.back().out;
  Tensor dout(last.shape[0], last.shape[1], last.shape[2], last.shape[3]);
  const std::size_t plane =
      static_cast<std::size_t>(last.shape[2]) * last.shape[3];
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < last.shape[1]; ++c) {
      const double g = dgap.data[dgap.index(s, c, 0, 0)] /
                       static_cast<double>(plane);
      double* p = dout.data.data() + dout.index(s, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) p[i] = g;
    }
  }
  relu_backward(last, dout);

  for (int b = static_cast<int>(spec.block_channels.size()) - 1; b >= 0; --b) {
    const BlockCache& bc = cache.blocks[static_cast<std::size_t>(b)];
    const Tensor& block_in =
        b == 0 ? cache.input : cache.blocks[static_cast<std::size_t>(b - 1)].out;

    Tensor dpooled;
    instance_norm_backward(bc.out, bc.norm_inv_std, dout, dpooled);

    Tensor dconcat(bc.concat.shape[0], bc.concat.shape[1], bc.concat.shape[2],
                   bc.concat.shape[3]);
    for (std::size_t k = 0; k < dpooled.data.size(); ++k) {
      dconcat.data[bc.pool_argmax[k]] += dpooled.data[k];
    }

    // Split the concatenation gradient: conv2 channels, then the residual.
    const int c2 = bc.act2.shape[1];
    Tensor dact2(bc.act2.shape[0], c2, bc.act2.shape[2], bc.act2.shape[3]);
    Tensor dres(block_in.shape[0], block_in.shape[1], block_in.shape[2],
                block_in.shape[3]);
    const std::size_t splane =
        static_cast<std::size_t>(bc.concat.shape[2]) * bc.concat.shape[3];
    for (int s = 0; s < n; ++s) {
      std::copy_n(dconcat.data.data() + dconcat.index(s, 0, 0, 0),
                  splane * static_cast<std::size_t>(c2),
                  dact2.data.data() + dact2.index(s, 0, 0, 0));
      std::copy_n(dconcat.data.data() + dconcat.index(s, c2, 0, 0),
                  splane * static_cast<std::size_t>(block_in.shape[1]),
                  dres.data.data() + dres.index(s, 0, 0, 0));
    }

    relu_backward(bc.pre2, dact2);
    ConvLayer& l2 = net.conv2[static_cast<std::size_t>(b)];
    Tensor dact1;
    conv3x3_backward(bc.act1, l2, dact2, &dact1, !l2.frozen);
    if (l2.frozen) {
      l2.w.zero_grad();
      l2.b.zero_grad();
    }

    relu_backward(bc.pre1, dact1);
    ConvLayer& l1 = net.conv1[static_cast<std::size_t>(b)];
    Tensor din;
    const bool want_din = b > 0;
    conv3x3_backward(block_in, l1, dact1, want_din ? &din : nullptr,
                     !l1.frozen);
    if (l1.frozen) {
      l1.w.zero_grad();
      l1.b.zero_grad();
    }

    if (want_din) {
      for (std::size_t i = 0; i < din.data.size(); ++i) {
        din.data[i] += dres.data[i];
      }
      dout = std::move(din);
    }
  }
  return wce.loss;
}

std::vector<ParamRef> parameters(Network& net) {
  std::vector<ParamRef> out;
  for (std::size_t b = 0; b < net.conv1.size(); ++b) {
    const std::string prefix = "block" + std::to_string(b + 1);
    out.push_back({prefix + ".conv1.w", &net.conv1[b].w, net.conv1[b].frozen});
    out.push_back({prefix + ".conv1.b", &net.conv1[b].b, net.conv1[b].frozen});
    out.push_back({prefix + ".conv2.w", &net.conv2[b].w, net.conv2[b].frozen});
    out.push_back({prefix + ".conv2.b", &net.conv2[b].b, net.conv2[b].frozen});
  }
  out.push_back({"head.fc1.w", &net.fc1.w, net.fc1.frozen});
  out.push_back({"head.fc1.b", &net.fc1.b, net.fc1.frozen});
  out.push_back({"head.fc2.w", &net.fc2.w, net.fc2.frozen});
  out.push_back({"head.fc2.b", &net.fc2.b, net.fc2.frozen});
  return out;
}

std::size_t parameter_count(const Network& net) {
  std::size_t n = 0;
  for (const ConvLayer& l : net.conv1) n += l.w.size() + l.b.size();
  for (const ConvLayer& l : net.conv2) n += l.w.size() + l.b.size();
  n += net.fc1.w.size() + net.fc1.b.size();
  n += net.fc2.w.size() + net.fc2.b.size();
  return n;
}

void freeze(Network& net, const std::vector<std::string>& selectors) {
  for (const std::string& sel : selectors) {
    bool hit = false;
    for (std::size_t b = 0; b < net.conv1.size(); ++b) {
      const std::string prefix = "block" + std::to_string(b + 1);
      if (sel == prefix || sel == prefix + ".conv1") {
        net.conv1[b].frozen = true;
        hit = true;
      }
      if (sel == prefix || sel == prefix + ".conv2") {
        net.conv2[b].frozen = true;
        hit = true;
      }
    }
    if (sel == "head" || sel == "head.fc1") {
      net.fc1.frozen = true;
      hit = true;
    }
    if (sel == "head" || sel == "head.fc2") {
      net.fc2.frozen = true;
      hit = true;
    }
    if (!hit) throw UnknownLayer("freeze: no layer named '" + sel + "'");
  }
}

std::vector<double> logit_gradient_last_block(const Network& net,
                                              const ForwardCache& cache,
                                              int sample, int target_class) {
  const NetworkSpec& spec = net.spec;
  if (cache.blocks.empty()) throw Error("logit gradient: cache is empty");
  if (sample < 0 || sample >= cache.input.shape[0]) {
    throw ShapeMismatch("logit gradient: sample index out of range");
  }
  if (target_class < 0 || target_class >= spec.num_classes) {
    throw LabelOutOfRange("logit gradient: class out of range");
  }
  const Tensor& last = cache.blocks.back().out;
  const int ch = last.shape[1];
  const std::size_t plane =
      static_cast<std::size_t>(last.shape[2]) * last.shape[3];

  // Head chain for one sample: logit -> fc2 -> ReLU -> fc1 -> GAP -> ReLU.
  std::vector<double> dfc1(static_cast<std::size_t>(net.fc1.out_units));
  for (int i = 0; i < net.fc1.out_units; ++i) {
    const double relu_open =
        cache.fc1_pre.data[cache.fc1_pre.index(sample, i, 0, 0)] > 0.0 ? 1.0
                                                                       : 0.0;
    dfc1[static_cast<std::size_t>(i)] =
        net.fc2.w.data[net.fc2.w.index(target_class, i, 0, 0)] * relu_open;
  }
  std::vector<double> dgap(static_cast<std::size_t>(ch), 0.0);
  for (int i = 0; i < net.fc1.out_units; ++i) {
    const double g = dfc1[static_cast<std::size_t>(i)];
    if (g == 0.0) continue;
    for (int c = 0; c < ch; ++c) {
      dgap[static_cast<std::size_t>(c)] +=
          g * net.fc1.w.data[net.fc1.w.index(i, c, 0, 0)];
    }
  }
  // Spread over the plane, gated by the head ReLU.
  std::vector<double> dact(static_cast<std::size_t>(ch) * plane);
  const double* act = last.data.data() + last.index(sample, 0, 0, 0);
  for (int c = 0; c < ch; ++c) {
    const double g =
        dgap[static_cast<std::size_t>(c)] / static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = static_cast<std::size_t>(c) * plane + i;
      dact[k] = act[k] > 0.0 ? g : 0.0;
    }
  }
  return dact;
}

namespace {

nlohmann::json spec_to_json(const NetworkSpec& spec) {
  nlohmann::json j;
  j["block_channels"] = spec.block_channels;
  j["dense_units"] = spec.dense_units;
  j["num_classes"] = spec.num_classes;
  j["input"] = {spec.in_channels, spec.in_height, spec.in_width};
  return j;
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec spec;
  spec.block_channels = j.at("block_channels").get<std::vector<int>>();
  spec.dense_units = j.at("dense_units").get<int>();
  spec.num_classes = j.at("num_classes").get<int>();
  spec.in_channels = j.at("input").at(0).get<int>();
  spec.in_height = j.at("input").at(1).get<int>();
  spec.in_width = j.at("input").at(2).get<int>();
  return spec;
}

constexpr char kMagic[4] = {'C', 'X', 'R', 'N'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  const std::string desc = spec_to_json(net.spec).dump();
  const std::uint64_t len = desc.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(desc.data(), static_cast<std::streamsize>(desc.size()));
  std::vector<ParamRef> params = parameters(const_cast<Network&>(net));
  for (const ParamRef& p : params) {
    out.write(reinterpret_cast<const char*>(p.tensor->data.data()),
              static_cast<std::streamsize>(p.tensor->data.size() *
                                           sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Network load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("'" + path + "' is not a checkpoint");
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (in.gcount() != sizeof(version)) {
    throw IoError("checkpoint '" + path + "' truncated");
  }
  if (version != kVersion) {
    throw FormatVersionMismatch("checkpoint '" + path + "' has version " +
                                std::to_string(version) + ", expected " +
                                std::to_string(kVersion));
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (in.gcount() != sizeof(len) || len > (1ULL << 24)) {
    throw IoError("checkpoint '" + path + "' has a bad descriptor length");
  }
  std::string desc(len, '\0');
  in.read(desc.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(in.gcount()) != len) {
    throw IoError("checkpoint '" + path + "' truncated");
  }
  NetworkSpec spec;
  try {
    spec = spec_from_json(nlohmann::json::parse(desc));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint '" + path + "': bad descriptor: " + e.what());
  }
  Network net = build_baseline(spec, 0);
  for (const ParamRef& p : parameters(net)) {
    const std::streamsize bytes =
        static_cast<std::streamsize>(p.tensor->data.size() * sizeof(double));
    in.read(reinterpret_cast<char*>(p.tensor->data.data()), bytes);
    if (in.gcount() != bytes) {
      throw IoError("checkpoint '" + path + "' truncated");
    }
  }
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) {
    throw IoError("checkpoint '" + path + "' has trailing bytes");
  }
  return net;
}

}  // namespace cxr
