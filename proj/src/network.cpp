/*
   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include "gridock/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "gridock/errors.hpp"
#include "gridock/textio.hpp"

namespace gridock {

namespace {

// Parallelizing tiny test networks costs more than it saves.
constexpr long OMP_MIN_WORK = 1 << 15;

struct Shape {
  int c, d, h, w;
  long numel() const { return static_cast<long>(c) * d * h * w; }
};

Shape conv_out_shape(const Conv3d& conv, const Shape& in) {
  if (conv.in_c != in.c)
    throw ContractError("conv layer expects " + std::to_string(conv.in_c) + " channels, got " +
                        std::to_string(in.c));
  auto out_dim = [&](int n) {
    const int num = n + 2 * conv.pad - conv.kernel;
    if (num < 0 || num % conv.stride != 0)
      throw ContractError("conv layer does not tile input dimension " + std::to_string(n));
    return num / conv.stride + 1;
  };
  return {conv.out_c, out_dim(in.d), out_dim(in.h), out_dim(in.w)};
}

Shape pool_out_shape(const MaxPool3d& pool, const Shape& in) {
  auto out_dim = [&](int n) {
    const int num = n - pool.kernel;
    if (num < 0 || num % pool.stride != 0)
      throw ContractError("maxpool does not tile input dimension " + std::to_string(n));
    return num / pool.stride + 1;
  };
  return {in.c, out_dim(in.d), out_dim(in.h), out_dim(in.w)};
}

std::vector<Shape> chain_shapes(const NetworkModel& model) {
  if (model.in_channels <= 0 || model.in_points <= 0)
    throw ContractError("model input shape not set");
  std::vector<Shape> shapes;
  shapes.push_back({model.in_channels, model.in_points, model.in_points, model.in_points});
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Shape& in = shapes.back();
    const Layer& layer = model.layers[i];
    if (std::holds_alternative<Dense>(layer)) {
      if (i + 1 != model.layers.size())
        throw ContractError("dense layer must be the final layer");
      const Dense& fc = std::get<Dense>(layer);
      if (fc.in_n != in.numel())
        throw ContractError("dense layer expects " + std::to_string(fc.in_n) +
                            " inputs, got " + std::to_string(in.numel()));
      shapes.push_back({fc.out_n, 1, 1, 1});
    } else if (std::holds_alternative<Conv3d>(layer)) {
      shapes.push_back(conv_out_shape(std::get<Conv3d>(layer), in));
    } else if (std::holds_alternative<MaxPool3d>(layer)) {
      shapes.push_back(pool_out_shape(std::get<MaxPool3d>(layer), in));
    } else {
      shapes.push_back(in);  // relu
    }
  }
  return shapes;
}

}  // namespace

Conv3d::Conv3d(int in_c_, int out_c_, int kernel_, int stride_, int pad_)
    : in_c(in_c_), out_c(out_c_), kernel(kernel_), stride(stride_), pad(pad_),
      weights(static_cast<std::size_t>(out_c_) * in_c_ * kernel_ * kernel_ * kernel_, 0.0),
      bias(out_c_, 0.0) {}

void NetworkModel::validate() const {
  const auto shapes = chain_shapes(*this);
  if (layers.empty() || !std::holds_alternative<Dense>(layers.back()))
    throw ContractError("model must end in a dense layer");
  if (std::get<Dense>(layers.back()).out_n != 2)
    throw ContractError("model head must have exactly 2 outputs");
  (void)shapes;
}

std::size_t NetworkModel::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& layer : layers) {
    if (const Conv3d* c = std::get_if<Conv3d>(&layer)) n += c->weights.size() + c->bias.size();
    if (const Dense* d = std::get_if<Dense>(&layer)) n += d->weights.size() + d->bias.size();
  }
  return n;
}

NetworkModel make_standard_model(int channels, int lattice_points) {
  if (channels <= 0) throw ContractError("make_standard_model: channels must be positive");
  const int cropped = (lattice_points / 8) * 8;
  if (cropped < 8)
    throw ContractError("make_standard_model: lattice of " + std::to_string(lattice_points) +
                        " points is too small for three pooling stages");
  NetworkModel m;
  m.in_channels = channels;
  m.in_points = cropped;
  const int filters[3] = {32, 64, 128};
  int c = channels;
  for (int stage = 0; stage < 3; ++stage) {
    m.layers.emplace_back(MaxPool3d{});
    m.layers.emplace_back(Conv3d(c, filters[stage], 3, 1, 1));
    m.layers.emplace_back(Relu{});
    c = filters[stage];
  }
  const int side = cropped / 8;
  m.layers.emplace_back(Dense(c * side * side * side, 2));
  m.validate();
  return m;
}

void initialize_weights(NetworkModel& model, std::uint64_t seed) {
  Rng rng(seed);
  for (Layer& layer : model.layers) {
    if (Conv3d* conv = std::get_if<Conv3d>(&layer)) {
      const double fan_in = static_cast<double>(conv->in_c) * conv->kernel * conv->kernel *
                            conv->kernel;
      const double bound = std::sqrt(3.0 / fan_in);
      for (double& w : conv->weights) w = rng.uniform(-bound, bound);
      std::fill(conv->bias.begin(), conv->bias.end(), 0.0);
    } else if (Dense* fc = std::get_if<Dense>(&layer)) {
      const double bound = std::sqrt(3.0 / fc->in_n);
      for (double& w : fc->weights) w = rng.uniform(-bound, bound);
      std::fill(fc->bias.begin(), fc->bias.end(), 0.0);
    }
  }
}

// ---------------------------------------------------------------------------
// Layer kernels

Tensor4 conv3d_forward(const Conv3d& conv, const Tensor4& x) {
  const Shape os = conv_out_shape(conv, {x.c, x.d, x.h, x.w});
  Tensor4 y(os.c, os.d, os.h, os.w);
  const int k = conv.kernel, s = conv.stride, p = conv.pad;
  const long outer = static_cast<long>(y.c) * y.d;
  const long work = outer * y.h * y.w * conv.in_c * k * k * k;
#pragma omp parallel for schedule(static) if (work > OMP_MIN_WORK)
  for (long fz = 0; fz < outer; ++fz) {
    const int f = static_cast<int>(fz / y.d);
    const int zo = static_cast<int>(fz % y.d);
    for (int yo = 0; yo < y.h; ++yo) {
      for (int xo = 0; xo < y.w; ++xo) {
        double acc = conv.bias[f];
        for (int ci = 0; ci < conv.in_c; ++ci) {
          for (int kz = 0; kz < k; ++kz) {
            const int zi = zo * s - p + kz;
            if (zi < 0 || zi >= x.d) continue;
            for (int ky = 0; ky < k; ++ky) {
              const int yi = yo * s - p + ky;
              if (yi < 0 || yi >= x.h) continue;
              const double* wrow = &conv.weights[conv.weight_index(f, ci, kz, ky, 0)];
              const double* xrow = &x.at(ci, zi, yi, 0);
              for (int kx = 0; kx < k; ++kx) {
                const int xi = xo * s - p + kx;
                if (xi < 0 || xi >= x.w) continue;
                acc += wrow[kx] * xrow[xi];
              }
            }
          }
        }
        y.at(f, zo, yo, xo) = acc;
      }
    }
  }
  return y;
}

Tensor4 conv3d_backward_input(const Conv3d& conv, const Tensor4& dout, int in_d, int in_h,
                              int in_w) {
  Tensor4 dx(conv.in_c, in_d, in_h, in_w);
  const int k = conv.kernel, s = conv.stride, p = conv.pad;
  const long outer = static_cast<long>(dx.c) * dx.d;
  const long work = outer * dx.h * dx.w * conv.out_c * k * k * k;
#pragma omp parallel for schedule(static) if (work > OMP_MIN_WORK)
  for (long cz = 0; cz < outer; ++cz) {
    const int ci = static_cast<int>(cz / dx.d);
    const int zi = static_cast<int>(cz % dx.d);
    for (int yi = 0; yi < dx.h; ++yi) {
      for (int xi = 0; xi < dx.w; ++xi) {
        double acc = 0.0;
        for (int f = 0; f < conv.out_c; ++f) {
          for (int kz = 0; kz < k; ++kz) {
            const int zn = zi + p - kz;
            if (zn < 0 || zn % s != 0) continue;
            const int zo = zn / s;
            if (zo >= dout.d) continue;
            for (int ky = 0; ky < k; ++ky) {
              const int yn = yi + p - ky;
              if (yn < 0 || yn % s != 0) continue;
              const int yo = yn / s;
              if (yo >= dout.h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int xn = xi + p - kx;
                if (xn < 0 || xn % s != 0) continue;
                const int xo = xn / s;
                if (xo >= dout.w) continue;
                acc += conv.weights[conv.weight_index(f, ci, kz, ky, kx)] *
                       dout.at(f, zo, yo, xo);
              }
            }
          }
        }
        dx.at(ci, zi, yi, xi) = acc;
      }
    }
  }
  return dx;
}

void conv3d_backward_params(const Conv3d& conv, const Tensor4& x, const Tensor4& dout,
                            std::vector<double>& dw, std::vector<double>& db) {
  dw.assign(conv.weights.size(), 0.0);
  db.assign(conv.bias.size(), 0.0);
  const int k = conv.kernel, s = conv.stride, p = conv.pad;
  const long work = static_cast<long>(conv.out_c) * conv.in_c * k * k * k * dout.d * dout.h *
                    dout.w;
#pragma omp parallel for schedule(static) if (work > OMP_MIN_WORK)
  for (int f = 0; f < conv.out_c; ++f) {
    double bias_acc = 0.0;
    for (int zo = 0; zo < dout.d; ++zo)
      for (int yo = 0; yo < dout.h; ++yo)
        for (int xo = 0; xo < dout.w; ++xo) bias_acc += dout.at(f, zo, yo, xo);
    db[f] = bias_acc;
    for (int ci = 0; ci < conv.in_c; ++ci) {
      for (int kz = 0; kz < k; ++kz) {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            double acc = 0.0;
            for (int zo = 0; zo < dout.d; ++zo) {
              const int zi = zo * s - p + kz;
              if (zi < 0 || zi >= x.d) continue;
              for (int yo = 0; yo < dout.h; ++yo) {
                const int yi = yo * s - p + ky;
                if (yi < 0 || yi >= x.h) continue;
                for (int xo = 0; xo < dout.w; ++xo) {
                  const int xi = xo * s - p + kx;
                  if (xi < 0 || xi >= x.w) continue;
                  acc += dout.at(f, zo, yo, xo) * x.at(ci, zi, yi, xi);
                }
              }
            }
            dw[conv.weight_index(f, ci, kz, ky, kx)] = acc;
          }
        }
      }
    }
  }
}

namespace {

void pool_forward(const MaxPool3d& pool, const Tensor4& x, Tensor4& y,
                  std::vector<int>& argmax) {
  const int k = pool.kernel, s = pool.stride;
  argmax.assign(y.size(), -1);
  const long outer = static_cast<long>(y.c) * y.d;
#pragma omp parallel for schedule(static) if (outer * y.h * y.w * k * k * k > OMP_MIN_WORK)
  for (long cz = 0; cz < outer; ++cz) {
    const int ci = static_cast<int>(cz / y.d);
    const int zo = static_cast<int>(cz % y.d);
    for (int yo = 0; yo < y.h; ++yo) {
      for (int xo = 0; xo < y.w; ++xo) {
        double best = -std::numeric_limits<double>::infinity();
        int best_idx = -1;
        // Scan in ascending linear index order; strict > keeps the lowest
        // index on ties.
        for (int kz = 0; kz < k; ++kz) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int zi = zo * s + kz, yi = yo * s + ky, xi = xo * s + kx;
              const double v = x.at(ci, zi, yi, xi);
              if (v > best) {
                best = v;
                best_idx = static_cast<int>(x.index(ci, zi, yi, xi));
              }
            }
          }
        }
        y.at(ci, zo, yo, xo) = best;
        argmax[y.index(ci, zo, yo, xo)] = best_idx;
      }
    }
  }
}

void pool_backward(const Tensor4& dout, const std::vector<int>& argmax, Tensor4& dx) {
  dx.fill(0.0);
  // Pool windows are disjoint (kernel == stride), so scatters never collide.
  const long n = static_cast<long>(dout.size());
#pragma omp parallel for schedule(static) if (n > OMP_MIN_WORK)
  for (long i = 0; i < n; ++i) dx.v[argmax[i]] += dout.v[i];
}

void relu_forward(const Tensor4& x, Tensor4& y) {
  const long n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (n > OMP_MIN_WORK)
  for (long i = 0; i < n; ++i) y.v[i] = x.v[i] > 0.0 ? x.v[i] : 0.0;
}

void relu_backward(const Tensor4& y, const Tensor4& dout, Tensor4& dx) {
  const long n = static_cast<long>(y.size());
#pragma omp parallel for schedule(static) if (n > OMP_MIN_WORK)
  for (long i = 0; i < n; ++i) dx.v[i] = y.v[i] > 0.0 ? dout.v[i] : 0.0;
}

std::array<double, 2> softmax2(const std::array<double, 2>& logits) {
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  const double sum = e0 + e1;
  return {e0 / sum, e1 / sum};
}

}  // namespace

Tensor4 crop_to_input(const NetworkModel& model, const AtomGrid& grid) {
  const int n = grid.spec.points_per_side();
  const int m = model.in_points;
  if (grid.spec.channel_count != model.in_channels)
    throw ContractError("forward: grid has " + std::to_string(grid.spec.channel_count) +
                        " channels, model expects " + std::to_string(model.in_channels));
  if (n < m)
    throw ContractError("forward: grid side " + std::to_string(n) +
                        " is smaller than model input " + std::to_string(m));
  if (n == m) return grid.values;
  Tensor4 out(model.in_channels, m, m, m);
  for (int ci = 0; ci < out.c; ++ci)
    for (int zi = 0; zi < m; ++zi)
      for (int yi = 0; yi < m; ++yi)
        std::memcpy(&out.at(ci, zi, yi, 0), &grid.values.at(ci, zi, yi, 0),
                    sizeof(double) * m);
  return out;
}

void forward_trace(const NetworkModel& model, Tensor4 input, ForwardTrace& trace) {
  const auto shapes = chain_shapes(model);
  if (input.c != shapes[0].c || input.d != shapes[0].d || input.h != shapes[0].h ||
      input.w != shapes[0].w)
    throw ContractError("forward: input tensor does not match model input shape");

  trace.acts.clear();
  trace.pool_argmax.assign(model.layers.size(), {});
  trace.acts.reserve(model.layers.size() + 1);
  trace.acts.push_back(std::move(input));

  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Shape& os = shapes[i + 1];
    Tensor4 out(os.c, os.d, os.h, os.w);
    const Tensor4& in = trace.acts.back();
    const Layer& layer = model.layers[i];
    if (const Conv3d* conv = std::get_if<Conv3d>(&layer)) {
      out = conv3d_forward(*conv, in);
    } else if (const MaxPool3d* pool = std::get_if<MaxPool3d>(&layer)) {
      pool_forward(*pool, in, out, trace.pool_argmax[i]);
    } else if (std::holds_alternative<Relu>(layer)) {
      relu_forward(in, out);
    } else {
      const Dense& fc = std::get<Dense>(layer);
      for (int o = 0; o < fc.out_n; ++o) {
        double acc = fc.bias[o];
        const double* wrow = &fc.weights[static_cast<std::size_t>(o) * fc.in_n];
        for (int j = 0; j < fc.in_n; ++j) acc += wrow[j] * in.v[j];
        out.v[o] = acc;
      }
    }
    trace.acts.push_back(std::move(out));
  }

  trace.logits = {trace.acts.back().v[0], trace.acts.back().v[1]};
  trace.probs = softmax2(trace.logits);
}

ForwardResult forward(const NetworkModel& model, const AtomGrid& grid) {
  ForwardTrace trace;
  forward_trace(model, crop_to_input(model, grid), trace);
  return {trace.logits, trace.probs};
}

Gradients make_zero_gradients(const NetworkModel& model) {
  Gradients g;
  g.layers.resize(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (const Conv3d* conv = std::get_if<Conv3d>(&model.layers[i])) {
      g.layers[i].weights.assign(conv->weights.size(), 0.0);
      g.layers[i].bias.assign(conv->bias.size(), 0.0);
    } else if (const Dense* fc = std::get_if<Dense>(&model.layers[i])) {
      g.layers[i].weights.assign(fc->weights.size(), 0.0);
      g.layers[i].bias.assign(fc->bias.size(), 0.0);
    }
  }
  g.input = Tensor4(model.in_channels, model.in_points, model.in_points, model.in_points);
  return g;
}

void Gradients::add_scaled(const Gradients& o, double s) {
  if (layers.size() != o.layers.size()) throw ContractError("gradient shape mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (std::size_t j = 0; j < layers[i].weights.size(); ++j)
      layers[i].weights[j] += s * o.layers[i].weights[j];
    for (std::size_t j = 0; j < layers[i].bias.size(); ++j)
      layers[i].bias[j] += s * o.layers[i].bias[j];
  }
}

Gradients backward(const NetworkModel& model, const ForwardTrace& trace,
                   const std::array<double, 2>& dlogits, bool want_weight_grads) {
  if (trace.acts.size() != model.layers.size() + 1)
    throw Error("backward: no forward trace for this model (run forward first)");

  Gradients grads;
  grads.layers.resize(model.layers.size());

  // Seed from the head and walk the stack backwards.
  Tensor4 dcur(2, 1, 1, 1);
  dcur.v[0] = dlogits[0];
  dcur.v[1] = dlogits[1];

  for (std::size_t ri = model.layers.size(); ri-- > 0;) {
    const Layer& layer = model.layers[ri];
    const Tensor4& in = trace.acts[ri];
    const Tensor4& out = trace.acts[ri + 1];
    Tensor4 dprev(in.c, in.d, in.h, in.w);
    if (const Conv3d* conv = std::get_if<Conv3d>(&layer)) {
      if (want_weight_grads)
        conv3d_backward_params(*conv, in, dcur, grads.layers[ri].weights, grads.layers[ri].bias);
      dprev = conv3d_backward_input(*conv, dcur, in.d, in.h, in.w);
    } else if (std::holds_alternative<MaxPool3d>(layer)) {
      pool_backward(dcur, trace.pool_argmax[ri], dprev);
    } else if (std::holds_alternative<Relu>(layer)) {
      relu_backward(out, dcur, dprev);
    } else {
      const Dense& fc = std::get<Dense>(layer);
      if (want_weight_grads) {
        grads.layers[ri].weights.assign(fc.weights.size(), 0.0);
        grads.layers[ri].bias.assign(fc.bias.size(), 0.0);
        for (int o = 0; o < fc.out_n; ++o) {
          grads.layers[ri].bias[o] = dcur.v[o];
          double* wrow = &grads.layers[ri].weights[static_cast<std::size_t>(o) * fc.in_n];
          for (int j = 0; j < fc.in_n; ++j) wrow[j] = dcur.v[o] * in.v[j];
        }
      }
      const long n = fc.in_n;
#pragma omp parallel for schedule(static) if (n * fc.out_n > OMP_MIN_WORK)
      for (long j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int o = 0; o < fc.out_n; ++o)
          acc += fc.weights[static_cast<std::size_t>(o) * fc.in_n + j] * dcur.v[o];
        dprev.v[j] = acc;
      }
    }
    dcur = std::move(dprev);
  }

  grads.input = std::move(dcur);
  return grads;
}

std::array<double, 2> loss_backward_seed(const ForwardTrace& trace, int target_label) {
  if (target_label != 0 && target_label != 1)
    throw ContractError("loss: target label must be 0 or 1");
  std::array<double, 2> d = trace.probs;
  d[target_label] -= 1.0;
  return d;
}

double cross_entropy_loss(const ForwardTrace& trace, int target_label) {
  if (target_label != 0 && target_label != 1)
    throw ContractError("loss: target label must be 0 or 1");
  const double m = std::max(trace.logits[0], trace.logits[1]);
  const double lse = m + std::log(std::exp(trace.logits[0] - m) + std::exp(trace.logits[1] - m));
  return lse - trace.logits[target_label];
}

ObjectiveMode objective_mode_from_string(const std::string& s) {
  if (s == "probability") return ObjectiveMode::probability;
  if (s == "logit") return ObjectiveMode::logit;
  throw ConfigError("objective must be 'probability' or 'logit', got '" + s + "'");
}

std::string to_string(ObjectiveMode m) {
  return m == ObjectiveMode::probability ? "probability" : "logit";
}

namespace {

std::array<double, 2> output_seed(const ForwardTrace& trace, int class_index,
                                  ObjectiveMode mode) {
  if (class_index != 0 && class_index != 1)
    throw ContractError("class_output_gradient: class index must be 0 or 1");
  std::array<double, 2> d{0.0, 0.0};
  if (mode == ObjectiveMode::logit) {
    d[class_index] = 1.0;
  } else {
    // Row of the softmax Jacobian: dp_c/dz_j = p_c (delta_cj - p_j).
    const double pc = trace.probs[class_index];
    for (int j = 0; j < 2; ++j)
      d[j] = pc * ((j == class_index ? 1.0 : 0.0) - trace.probs[j]);
  }
  return d;
}

Tensor4 embed_in_lattice(const Tensor4& cropped, const GridSpec& spec) {
  const int n = spec.points_per_side();
  if (cropped.d == n) return cropped;
  Tensor4 full(spec.channel_count, n, n, n);
  for (int ci = 0; ci < cropped.c; ++ci)
    for (int zi = 0; zi < cropped.d; ++zi)
      for (int yi = 0; yi < cropped.h; ++yi)
        std::memcpy(&full.at(ci, zi, yi, 0), &cropped.at(ci, zi, yi, 0),
                    sizeof(double) * cropped.w);
  return full;
}

}  // namespace

Tensor4 class_output_gradient(const NetworkModel& model, const AtomGrid& grid, int class_index,
                              ObjectiveMode mode) {
  ForwardTrace trace;
  forward_trace(model, crop_to_input(model, grid), trace);
  const Gradients g = backward(model, trace, output_seed(trace, class_index, mode), false);
  return embed_in_lattice(g.input, grid.spec);
}

ScoredGradient score_with_gradient(const NetworkModel& model, const AtomGrid& grid,
                                   int class_index, ObjectiveMode mode) {
  ForwardTrace trace;
  forward_trace(model, crop_to_input(model, grid), trace);
  ScoredGradient sg;
  sg.out = {trace.logits, trace.probs};
  sg.score = mode == ObjectiveMode::probability ? trace.probs[class_index]
                                                : trace.logits[class_index];
  const Gradients g = backward(model, trace, output_seed(trace, class_index, mode), false);
  sg.grid_grad = embed_in_lattice(g.input, grid.spec);
  return sg;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(base_lr > 0) || !(momentum >= 0) || !(gamma > 0) || !(power > 0) ||
      !(weight_decay >= 0))
    throw ConfigError("train config: rates must be positive");
  if (batch_size <= 0 || batch_size % 2 != 0)
    throw ConfigError("train config: batch_size must be positive and even");
  if (max_iterations < 1) throw ConfigError("train config: max_iterations must be >= 1");
  if (!(augment_translation >= 0))
    throw ConfigError("train config: augment_translation must be >= 0");
}

double learning_rate(const TrainConfig& cfg, long t) {
  return cfg.base_lr * std::pow(1.0 + cfg.gamma * static_cast<double>(t), -cfg.power);
}

PoseJitter draw_pose_jitter(Rng& rng, double max_translation) {
  PoseJitter j;
  j.rotation = uniform_quaternion(rng).to_matrix();
  j.translation = {rng.uniform(-max_translation, max_translation),
                   rng.uniform(-max_translation, max_translation),
                   rng.uniform(-max_translation, max_translation)};
  return j;
}

void apply_pose_jitter(std::vector<Vec3>& coords, const Vec3& center, const PoseJitter& jitter) {
  for (Vec3& p : coords) p = jitter.rotation.apply(p - center) + center + jitter.translation;
}

BatchSampler::BatchSampler(std::span<const int> labels, int batch_size, Rng& rng)
    : batch_size_(batch_size), rng_(rng) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ConfigError("batch sampler: label must be 0 or 1");
    pools_[labels[i]].push_back(static_cast<int>(i));
  }
  if (pools_[0].empty() || pools_[1].empty())
    throw ConfigError("training set must contain both classes");
  rng_.shuffle(pools_[0]);
  rng_.shuffle(pools_[1]);
}

int BatchSampler::draw(int cls) {
  if (cursor_[cls] == pools_[cls].size()) {
    rng_.shuffle(pools_[cls]);
    cursor_[cls] = 0;
  }
  return pools_[cls][cursor_[cls]++];
}

std::vector<int> BatchSampler::next_batch() {
  std::vector<int> batch;
  batch.reserve(batch_size_);
  for (int i = 0; i < batch_size_ / 2; ++i) batch.push_back(draw(0));
  for (int i = 0; i < batch_size_ / 2; ++i) batch.push_back(draw(1));
  return batch;
}

namespace {

AtomGrid rasterize_example(const TrainExample& ex, const GridSpec& geometry,
                           const PoseJitter* jitter, const AtomTypeTable& table) {
  GridSpec spec = geometry;
  spec.center = ex.grid_center;
  std::vector<Vec3> rec_coords;
  std::vector<int> rec_types;
  if (ex.receptor) {
    rec_coords.reserve(ex.receptor->atoms.size());
    rec_types.reserve(ex.receptor->atoms.size());
    for (const Atom& a : ex.receptor->atoms) {
      rec_coords.push_back(a.pos);
      rec_types.push_back(a.type);
    }
  }
  std::vector<Vec3> lig_coords = ex.ligand_coords;
  if (jitter) {
    apply_pose_jitter(rec_coords, ex.grid_center, *jitter);
    apply_pose_jitter(lig_coords, ex.grid_center, *jitter);
  }
  return rasterize(spec, rec_coords, rec_types, lig_coords, ex.ligand_types, table);
}

}  // namespace

TrainResult train(NetworkModel& model, std::span<const TrainExample> examples,
                  const GridSpec& geometry, const AtomTypeTable& table, const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  if (geometry.channel_count != model.in_channels)
    throw ConfigError("train: grid channel_count does not match model input channels");
  if (table.size() != geometry.channel_count)
    throw ConfigError("train: atom type table size does not match grid channel_count");
  if (examples.empty()) throw ConfigError("train: empty training set");

  std::vector<int> labels;
  labels.reserve(examples.size());
  for (const TrainExample& ex : examples) {
    if (ex.label != 0 && ex.label != 1) throw ConfigError("train: label must be 0 or 1");
    labels.push_back(ex.label);
  }

  Rng rng(cfg.seed);
  BatchSampler sampler(labels, cfg.batch_size, rng);

  Gradients velocity = make_zero_gradients(model);
  TrainResult result;
  result.trace.reserve(static_cast<std::size_t>(cfg.max_iterations));

  for (long t = 0; t < cfg.max_iterations; ++t) {
    const double lr = learning_rate(cfg, t);
    const std::vector<int> batch = sampler.next_batch();

    Gradients batch_grad = make_zero_gradients(model);
    double loss_sum = 0.0;
    int correct = 0;

    // Examples are evaluated in batch order; the kernels parallelize
    // internally, so the reduction order is fixed for any thread count.
    for (int idx : batch) {
      const TrainExample& ex = examples[idx];
      PoseJitter jitter;
      if (cfg.augment) jitter = draw_pose_jitter(rng, cfg.augment_translation);
      const AtomGrid grid =
          rasterize_example(ex, geometry, cfg.augment ? &jitter : nullptr, table);
      ForwardTrace trace;
      forward_trace(model, crop_to_input(model, grid), trace);
      loss_sum += cross_entropy_loss(trace, ex.label);
      const int pred = trace.logits[0] >= trace.logits[1] ? 0 : 1;
      if (pred == ex.label) ++correct;
      const Gradients g = backward(model, trace, loss_backward_seed(trace, ex.label), true);
      batch_grad.add_scaled(g, 1.0);
    }

    const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
      std::vector<double>* weights = nullptr;
      std::vector<double>* bias = nullptr;
      if (Conv3d* conv = std::get_if<Conv3d>(&model.layers[li])) {
        weights = &conv->weights;
        bias = &conv->bias;
      } else if (Dense* fc = std::get_if<Dense>(&model.layers[li])) {
        weights = &fc->weights;
        bias = &fc->bias;
      } else {
        continue;
      }
      auto& vel = velocity.layers[li];
      auto& grad = batch_grad.layers[li];
      for (std::size_t j = 0; j < weights->size(); ++j) {
        const double g = grad.weights[j] * inv_batch + cfg.weight_decay * (*weights)[j];
        vel.weights[j] = cfg.momentum * vel.weights[j] + lr * g;
        (*weights)[j] -= vel.weights[j];
      }
      for (std::size_t j = 0; j < bias->size(); ++j) {
        const double g = grad.bias[j] * inv_batch;
        vel.bias[j] = cfg.momentum * vel.bias[j] + lr * g;
        (*bias)[j] -= vel.bias[j];
      }
    }

    result.trace.push_back({t, lr, loss_sum * inv_batch,
                            static_cast<double>(correct) / cfg.batch_size});
  }
  return result;
}

double evaluate_accuracy(const NetworkModel& model, std::span<const TrainExample> examples,
                         const GridSpec& geometry, const AtomTypeTable& table) {
  if (examples.empty()) throw ContractError("evaluate_accuracy: empty example list");
  long correct = 0;
  for (const TrainExample& ex : examples) {
    const AtomGrid grid = rasterize_example(ex, geometry, nullptr, table);
    ForwardTrace trace;
    forward_trace(model, crop_to_input(model, grid), trace);
    const int pred = trace.logits[0] >= trace.logits[1] ? 0 : 1;
    if (pred == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

void write_loss_trace_csv(const std::string& path, const TrainResult& result) {
  std::string out = "iteration,lr,loss,accuracy\n";
  for (const LossTraceRow& row : result.trace) {
    out += std::to_string(row.iteration);
    out += ',';
    out += fmt_double(row.lr);
    out += ',';
    out += fmt_double(row.loss);
    out += ',';
    out += fmt_double(row.accuracy);
    out += '\n';
  }
  write_file(path, out);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char MODEL_MAGIC[8] = {'G', 'D', 'O', 'C', 'K', 'N', 'N', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError("model file: truncated");
  return v;
}
double read_f64(std::istream& in) {
  double v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError("model file: truncated");
  return v;
}
void write_doubles(std::ostream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}
void read_doubles(std::istream& in, std::vector<double>& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(v.size() * sizeof(double)))
    throw FormatError("model file: truncated");
}

enum LayerKind : std::uint32_t { KIND_POOL = 0, KIND_CONV = 1, KIND_RELU = 2, KIND_DENSE = 3 };

}  // namespace

void save_model(const std::string& path, const NetworkModel& model, double edge_length,
                double resolution) {
  model.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write model file: " + path);
  out.write(MODEL_MAGIC, sizeof(MODEL_MAGIC));
  write_u32(out, 1);
  write_u32(out, static_cast<std::uint32_t>(model.in_channels));
  write_u32(out, static_cast<std::uint32_t>(model.in_points));
  write_f64(out, edge_length);
  write_f64(out, resolution);
  write_u32(out, static_cast<std::uint32_t>(model.layers.size()));
  for (const Layer& layer : model.layers) {
    if (const MaxPool3d* pool = std::get_if<MaxPool3d>(&layer)) {
      write_u32(out, KIND_POOL);
      write_u32(out, static_cast<std::uint32_t>(pool->kernel));
      write_u32(out, static_cast<std::uint32_t>(pool->stride));
    } else if (const Conv3d* conv = std::get_if<Conv3d>(&layer)) {
      write_u32(out, KIND_CONV);
      write_u32(out, static_cast<std::uint32_t>(conv->in_c));
      write_u32(out, static_cast<std::uint32_t>(conv->out_c));
      write_u32(out, static_cast<std::uint32_t>(conv->kernel));
      write_u32(out, static_cast<std::uint32_t>(conv->stride));
      write_u32(out, static_cast<std::uint32_t>(conv->pad));
    } else if (std::holds_alternative<Relu>(layer)) {
      write_u32(out, KIND_RELU);
    } else {
      const Dense& fc = std::get<Dense>(layer);
      write_u32(out, KIND_DENSE);
      write_u32(out, static_cast<std::uint32_t>(fc.in_n));
      write_u32(out, static_cast<std::uint32_t>(fc.out_n));
    }
  }
  for (const Layer& layer : model.layers) {
    if (const Conv3d* conv = std::get_if<Conv3d>(&layer)) {
      write_doubles(out, conv->weights);
      write_doubles(out, conv->bias);
    } else if (const Dense* fc = std::get_if<Dense>(&layer)) {
      write_doubles(out, fc->weights);
      write_doubles(out, fc->bias);
    }
  }
  if (!out) throw FormatError("short write: " + path);
}

LoadedModel load_model(const std::string& path, int expected_channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, MODEL_MAGIC, sizeof(magic)) != 0)
    throw FormatError("model file: bad magic");
  if (read_u32(in) != 1) throw FormatError("model file: unsupported format_version");

  LoadedModel lm;
  lm.model.in_channels = static_cast<int>(read_u32(in));
  lm.model.in_points = static_cast<int>(read_u32(in));
  lm.edge_length = read_f64(in);
  lm.resolution = read_f64(in);
  if (expected_channels >= 0 && lm.model.in_channels != expected_channels)
    throw FormatError("model file: channel_count mismatch: expected " +
                      std::to_string(expected_channels) + ", file has " +
                      std::to_string(lm.model.in_channels));

  const std::uint32_t layer_count = read_u32(in);
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const std::uint32_t kind = read_u32(in);
    switch (kind) {
      case KIND_POOL: {
        MaxPool3d pool;
        pool.kernel = static_cast<int>(read_u32(in));
        pool.stride = static_cast<int>(read_u32(in));
        lm.model.layers.emplace_back(pool);
        break;
      }
      case KIND_CONV: {
        const int in_c = static_cast<int>(read_u32(in));
        const int out_c = static_cast<int>(read_u32(in));
        const int kernel = static_cast<int>(read_u32(in));
        const int stride = static_cast<int>(read_u32(in));
        const int pad = static_cast<int>(read_u32(in));
        lm.model.layers.emplace_back(Conv3d(in_c, out_c, kernel, stride, pad));
        break;
      }
      case KIND_RELU:
        lm.model.layers.emplace_back(Relu{});
        break;
      case KIND_DENSE: {
        const int in_n = static_cast<int>(read_u32(in));
        const int out_n = static_cast<int>(read_u32(in));
        lm.model.layers.emplace_back(Dense(in_n, out_n));
        break;
      }
      default:
        throw FormatError("model file: unknown layer kind " + std::to_string(kind));
    }
  }
  for (Layer& layer : lm.model.layers) {
    if (Conv3d* conv = std::get_if<Conv3d>(&layer)) {
      read_doubles(in, conv->weights);
      read_doubles(in, conv->bias);
    } else if (Dense* fc = std::get_if<Dense>(&layer)) {
      read_doubles(in, fc->weights);
      read_doubles(in, fc->bias);
    }
  }
  lm.model.validate();
  return lm;
}

}  // namespace gridock
