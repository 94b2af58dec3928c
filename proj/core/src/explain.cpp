#include "cxr/explain.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "cxr/error.hpp"
#include "cxr/image_io.hpp"
#include "cxr/rng.hpp"

namespace cxr {

namespace {

Tensor image_to_batch(const GrayImage& img, int channels) {
  Tensor batch(1, channels, img.height, img.width);
  for (int c = 0; c < channels; ++c) {
    double* dst = batch.data.data() + batch.index(0, c, 0, 0);
    for (std::size_t i = 0; i < img.size(); ++i) dst[i] = img.data[i] / 255.0;
  }
  return batch;
}

void check_input_dims(const Network& net, const GrayImage& img) {
  if (img.width != net.spec.in_width || img.height != net.spec.in_height) {
    throw ShapeMismatch("explain: image is " + std::to_string(img.width) +
                        "x" + std::to_string(img.height) + ", network wants " +
                        std::to_string(net.spec.in_width) + "x" +
                        std::to_string(net.spec.in_height));
  }
}

}  // namespace

Heatmap grad_cam(const Network& net, const GrayImage& img, int target_class,
                 std::vector<double>* channel_weights) {
  check_input_dims(net, img);
  ForwardCache cache;
  forward(net, image_to_batch(img, net.spec.in_channels), &cache);

  const Tensor& act = cache.blocks.back().out;
  const int ch = act.shape[1], mh = act.shape[2], mw = act.shape[3];
  const std::size_t plane = static_cast<std::size_t>(mh) * mw;
  const std::vector<double> dact =
      logit_gradient_last_block(net, cache, 0, target_class);

  std::vector<double> alpha(static_cast<std::size_t>(ch), 0.0);
  for (int c = 0; c < ch; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      acc += dact[static_cast<std::size_t>(c) * plane + i];
    }
    alpha[static_cast<std::size_t>(c)] = acc / static_cast<double>(plane);
  }
  if (channel_weights) *channel_weights = alpha;

  GrayImage cam(mw, mh);
  double peak = 0.0;
  for (int y = 0; y < mh; ++y) {
    for (int x = 0; x < mw; ++x) {
      double acc = 0.0;
      for (int c = 0; c < ch; ++c) {
        acc += alpha[static_cast<std::size_t>(c)] * act.at(0, c, y, x);
      }
      const double v = std::max(acc, 0.0);
      cam.at(x, y) = v;
      peak = std::max(peak, v);
    }
  }

  Heatmap map;
  map.width = img.width;
  map.height = img.height;
  map.values.assign(img.size(), 0.0);
  if (peak <= 0.0) return map;

  // Scale into [0,1] so the image resizer's [0,255] clamp cannot bite, then
  // normalize again after upsampling.
  for (double& v : cam.data) v /= peak;
  const GrayImage up = resize_bilinear(cam, img.width, img.height);
  double lo = up.data[0], hi = up.data[0];
  for (double v : up.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo <= 0.0) return map;
  for (std::size_t i = 0; i < up.data.size(); ++i) {
    map.values[i] = (up.data[i] - lo) / (hi - lo);
  }
  return map;
}

PredictFn network_predictor(const Network& net, int target_class) {
  if (target_class < 0 || target_class >= net.spec.num_classes) {
    throw LabelOutOfRange("network_predictor: class out of range");
  }
  return [&net, target_class](const GrayImage& img) {
    check_input_dims(net, img);
    const Tensor probs = forward(net, image_to_batch(img, net.spec.in_channels));
    return probs.data[probs.index(0, target_class, 0, 0)];
  };
}

namespace {

int segment_of(int x, int y, int width, int height, int rows, int cols) {
  const int row = std::min(rows - 1, y * rows / height);
  const int col = std::min(cols - 1, x * cols / width);
  return row * cols + col;
}

// Solves a. x = b in place by Gaussian elimination with partial pivoting.
std::vector<double> solve_dense(std::vector<std::vector<double>> a,
                                std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    const double diag = a[col][col];
    if (diag == 0.0) throw Error("lime: singular normal equations");
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / diag;
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t r = n; r-- > 0;) {
    double acc = b[r];
    for (std::size_t c = r + 1; c < n; ++c) acc -= a[r][c] * x[c];
    x[r] = acc / a[r][r];
  }
  return x;
}

}  // namespace

LimeExplanation lime_explain(const PredictFn& predict, const GrayImage& img,
                             const LimeOptions& options) {
  if (options.rows < 1 || options.cols < 1 || options.rows > img.height ||
      options.cols > img.width) {
    throw Error("lime: grid must be between 1x1 and the image size");
  }
  const int segments = options.rows * options.cols;
  if (options.num_perturbations < segments + 1) {
    throw TooFewPerturbations(
        "lime: need at least " + std::to_string(segments + 1) +
        " perturbations for " + std::to_string(segments) + " segments");
  }

  std::vector<int> seg_of_pixel(img.size());
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      seg_of_pixel[static_cast<std::size_t>(y) * img.width + x] =
          segment_of(x, y, img.width, img.height, options.rows, options.cols);
    }
  }
  double fill = 0.0;
  if (options.fill == LimeFill::Mean) {
    for (double v : img.data) fill += v;
    fill /= static_cast<double>(img.size());
  }

  const int n = options.num_perturbations;
  Rng rng(options.seed);
  std::vector<std::vector<std::uint8_t>> masks(
      static_cast<std::size_t>(n),
      std::vector<std::uint8_t>(static_cast<std::size_t>(segments), 1));
  for (int k = 1; k < n; ++k) {
    for (int s = 0; s < segments; ++s) {
      masks[static_cast<std::size_t>(k)][static_cast<std::size_t>(s)] =
          rng.uniform() < 0.5 ? 1 : 0;
    }
  }

  const double kernel_width = std::sqrt(static_cast<double>(segments)) * 0.75;
  std::vector<double> response(static_cast<std::size_t>(n));
  std::vector<double> kernel(static_cast<std::size_t>(n));
  GrayImage perturbed = img;
  for (int k = 0; k < n; ++k) {
    const auto& mask = masks[static_cast<std::size_t>(k)];
    int off = 0;
    for (std::size_t i = 0; i < img.size(); ++i) {
      perturbed.data[i] =
          mask[static_cast<std::size_t>(seg_of_pixel[i])] ? img.data[i] : fill;
    }
    for (int s = 0; s < segments; ++s) {
      if (!mask[static_cast<std::size_t>(s)]) ++off;
    }
    response[static_cast<std::size_t>(k)] = predict(perturbed);
    const double d = static_cast<double>(off) / kernel_width;
    kernel[static_cast<std::size_t>(k)] = std::exp(-d * d);
  }

  // Weighted ridge normal equations over [intercept, segments].
  const std::size_t dim = static_cast<std::size_t>(segments) + 1;
  std::vector<std::vector<double>> ata(dim, std::vector<double>(dim, 0.0));
  std::vector<double> atb(dim, 0.0);
  std::vector<double> row(dim, 1.0);
  for (int k = 0; k < n; ++k) {
    const auto& mask = masks[static_cast<std::size_t>(k)];
    for (int s = 0; s < segments; ++s) {
      row[static_cast<std::size_t>(s) + 1] =
          mask[static_cast<std::size_t>(s)] ? 1.0 : 0.0;
    }
    const double w = kernel[static_cast<std::size_t>(k)];
    const double y = response[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < dim; ++i) {
      if (row[i] == 0.0) continue;
      const double wi = w * row[i];
      for (std::size_t j = i; j < dim; ++j) ata[i][j] += wi * row[j];
      atb[i] += wi * y;
    }
  }
  constexpr double kRidge = 1e-6;
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < i; ++j) ata[i][j] = ata[j][i];
    ata[i][i] += kRidge;
  }
  const std::vector<double> beta = solve_dense(std::move(ata), std::move(atb));

  LimeExplanation e;
  e.rows = options.rows;
  e.cols = options.cols;
  e.intercept = beta[0];
  e.segment_weights.assign(beta.begin() + 1, beta.end());
  e.num_perturbations = n;
  e.seed = options.seed;

  double wsum = 0.0, ybar = 0.0;
  for (int k = 0; k < n; ++k) {
    wsum += kernel[static_cast<std::size_t>(k)];
    ybar += kernel[static_cast<std::size_t>(k)] *
            response[static_cast<std::size_t>(k)];
  }
  ybar /= wsum;
  double ss_res = 0.0, ss_tot = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto& mask = masks[static_cast<std::size_t>(k)];
    double fit = beta[0];
    for (int s = 0; s < segments; ++s) {
      if (mask[static_cast<std::size_t>(s)]) {
        fit += beta[static_cast<std::size_t>(s) + 1];
      }
    }
    const double w = kernel[static_cast<std::size_t>(k)];
    const double y = response[static_cast<std::size_t>(k)];
    ss_res += w * (y - fit) * (y - fit);
    ss_tot += w * (y - ybar) * (y - ybar);
  }
  if (ss_tot <= 1e-12) {
    e.r2 = {0.0, false};
  } else {
    e.r2 = {std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0), true};
  }
  return e;
}

LimeExplanation lime_explain(const Network& net, const GrayImage& img,
                             int target_class, const LimeOptions& options) {
  check_input_dims(net, img);
  return lime_explain(network_predictor(net, target_class), img, options);
}

std::string lime_to_json(const LimeExplanation& e) {
  nlohmann::json j;
  j["rows"] = e.rows;
  j["cols"] = e.cols;
  j["segment_weights"] = e.segment_weights;
  j["intercept"] = e.intercept;
  j["r2"] = e.r2.defined ? nlohmann::json(e.r2.value) : nlohmann::json(nullptr);
  j["num_perturbations"] = e.num_perturbations;
  j["seed"] = e.seed;
  return j.dump(2);
}

namespace {

struct Rgb {
  double r, g, b;
};

// Five-anchor approximation of a perceptually-ordered (dark blue to yellow)
// colormap, linearly interpolated.
Rgb colormap(double t) {
  static const Rgb anchors[5] = {{68, 1, 84},
                                 {59, 82, 139},
                                 {33, 145, 140},
                                 {94, 201, 98},
                                 {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(t));
  const double f = t - i;
  return {anchors[i].r + f * (anchors[i + 1].r - anchors[i].r),
          anchors[i].g + f * (anchors[i + 1].g - anchors[i].g),
          anchors[i].b + f * (anchors[i + 1].b - anchors[i].b)};
}

}  // namespace

void render_cam_overlay(const GrayImage& img, const Heatmap& map,
                        const std::string& out_path) {
  if (img.width != map.width || img.height != map.height) {
    throw ShapeMismatch("render_cam_overlay: dimensions differ");
  }
  RgbImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double gray = img.at(x, y);
      const Rgb c = colormap(map.at(x, y));
      const std::size_t i =
          (static_cast<std::size_t>(y) * img.width + x) * 3;
      out.data[i] = quantize_intensity(0.5 * gray + 0.5 * c.r);
      out.data[i + 1] = quantize_intensity(0.5 * gray + 0.5 * c.g);
      out.data[i + 2] = quantize_intensity(0.5 * gray + 0.5 * c.b);
    }
  }
  write_png_rgb(out, out_path);
}

void render_lime_overlay(const GrayImage& img, const LimeExplanation& e,
                         const std::string& out_path) {
  if (e.rows < 1 || e.cols < 1 ||
      e.segment_weights.size() !=
          static_cast<std::size_t>(e.rows) * static_cast<std::size_t>(e.cols)) {
    throw ShapeMismatch("render_lime_overlay: malformed explanation");
  }
  double peak = 0.0;
  for (double w : e.segment_weights) peak = std::max(peak, std::abs(w));
  RgbImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double gray = img.at(x, y);
      double r = gray, g = gray, b = gray;
      if (peak > 0.0) {
        const int s = segment_of(x, y, img.width, img.height, e.rows, e.cols);
        const double w = e.segment_weights[static_cast<std::size_t>(s)];
        const double a = 0.5 * std::abs(w) / peak;
        if (w >= 0.0) {
          r = gray * (1.0 - a);
          g = gray * (1.0 - a) + 255.0 * a;
          b = gray * (1.0 - a);
        } else {
          r = gray * (1.0 - a) + 255.0 * a;
          g = gray * (1.0 - a);
          b = gray * (1.0 - a);
        }
      }
      const std::size_t i =
          (static_cast<std::size_t>(y) * img.width + x) * 3;
      out.data[i] = quantize_intensity(r);
      out.data[i + 1] = quantize_intensity(g);
      out.data[i + 2] = quantize_intensity(b);
    }
  }
  write_png_rgb(out, out_path);
}

}  // namespace cxr
