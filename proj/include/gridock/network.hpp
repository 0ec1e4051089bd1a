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

#ifndef GRIDOCK_NETWORK_HPP
#define GRIDOCK_NETWORK_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gridock/grid.hpp"
#include "gridock/molecule.hpp"
#include "gridock/rng.hpp"
#include "gridock/tensor.hpp"

namespace gridock {

// ---------------------------------------------------------------------------
// Layers

struct Conv3d {
  int in_c = 0, out_c = 0, kernel = 3, stride = 1, pad = 1;
  std::vector<double> weights;  // (out_c, in_c, kz, ky, kx)
  std::vector<double> bias;     // (out_c)

  Conv3d() = default;
  Conv3d(int in_c_, int out_c_, int kernel_ = 3, int stride_ = 1, int pad_ = 1);

  std::size_t weight_index(int f, int ci, int kz, int ky, int kx) const {
    return (((static_cast<std::size_t>(f) * in_c + ci) * kernel + kz) * kernel + ky) * kernel +
           kx;
  }
};

struct MaxPool3d {
  int kernel = 2, stride = 2;
};

struct Relu {};

struct Dense {
  int in_n = 0, out_n = 0;
  std::vector<double> weights;  // (out_n, in_n) row-major over flattened input
  std::vector<double> bias;     // (out_n)

  Dense() = default;
  Dense(int in_n_, int out_n_)
      : in_n(in_n_), out_n(out_n_),
        weights(static_cast<std::size_t>(in_n_) * out_n_, 0.0), bias(out_n_, 0.0) {}
};

using Layer = std::variant<MaxPool3d, Conv3d, Relu, Dense>;

// ---------------------------------------------------------------------------
// Model

// A scoring network: layer stack ending in a Dense head with 2 outputs
// (class 0 = binding, class 1 = non-binding), read through a softmax.
struct NetworkModel {
  int in_channels = 0;
  int in_points = 0;  // input lattice is cropped to in_points^3 (low corner)
  std::vector<Layer> layers;

  // Checks shape chaining and the 2-class head; throws ContractError.
  void validate() const;
  std::size_t parameter_count() const;
};

inline constexpr int BINDING_CLASS = 0;
inline constexpr int NONBINDING_CLASS = 1;

// The standard architecture: three modules of (maxpool 2^3/2, conv 3^3/1
// pad 1, relu) with 32, 64, 128 filters, then a 2-way dense head.
// lattice_points is the raw grid side; it is cropped down to the nearest
// multiple of 8 so three pooling stages divide evenly.
NetworkModel make_standard_model(int channels, int lattice_points);

// Seeded uniform fan-in initialization (+-sqrt(3/fan_in)); biases zero.
void initialize_weights(NetworkModel& model, std::uint64_t seed);

// The OpenMP convolution kernels, exposed for the bit-identity tests and the
// bench tool. Deterministic for any thread count.
Tensor4 conv3d_forward(const Conv3d& conv, const Tensor4& x);
Tensor4 conv3d_backward_input(const Conv3d& conv, const Tensor4& dout, int in_d, int in_h,
                              int in_w);
void conv3d_backward_params(const Conv3d& conv, const Tensor4& x, const Tensor4& dout,
                            std::vector<double>& dw, std::vector<double>& db);

// ---------------------------------------------------------------------------
// Forward / backward

struct ForwardTrace {
  std::vector<Tensor4> acts;                  // acts[0] = input, acts[i+1] = layer i output
  std::vector<std::vector<int>> pool_argmax;  // per layer; empty unless maxpool
  std::array<double, 2> logits{};
  std::array<double, 2> probs{};
};

struct ForwardResult {
  std::array<double, 2> logits{};
  std::array<double, 2> probs{};
};

// Crops (low-corner) a grid tensor to the model's input shape.
Tensor4 crop_to_input(const NetworkModel& model, const AtomGrid& grid);

void forward_trace(const NetworkModel& model, Tensor4 input, ForwardTrace& trace);
ForwardResult forward(const NetworkModel& model, const AtomGrid& grid);

struct Gradients {
  struct LayerGrad {
    std::vector<double> weights, bias;
  };
  std::vector<LayerGrad> layers;
  Tensor4 input;  // dObjective/dInput, model input shape

  void add_scaled(const Gradients& o, double s);
};

Gradients make_zero_gradients(const NetworkModel& model);

// Backpropagates from an arbitrary dObjective/dlogits. Requires the trace of
// a completed forward pass on the same input.
Gradients backward(const NetworkModel& model, const ForwardTrace& trace,
                   const std::array<double, 2>& dlogits, bool want_weight_grads = true);

// dLoss/dlogits of softmax cross-entropy against target_label.
std::array<double, 2> loss_backward_seed(const ForwardTrace& trace, int target_label);
double cross_entropy_loss(const ForwardTrace& trace, int target_label);

enum class ObjectiveMode { probability, logit };

ObjectiveMode objective_mode_from_string(const std::string& s);
std::string to_string(ObjectiveMode m);

// Gradient of one class output (softmax probability or raw logit) with
// respect to every input voxel, embedded back into full-lattice shape.
Tensor4 class_output_gradient(const NetworkModel& model, const AtomGrid& grid, int class_index,
                              ObjectiveMode mode);

// One-pass score + input gradient, full-lattice shape; the pose optimizer's
// inner evaluation.
struct ScoredGradient {
  double score = 0.0;
  ForwardResult out;
  Tensor4 grid_grad;
};
ScoredGradient score_with_gradient(const NetworkModel& model, const AtomGrid& grid,
                                   int class_index, ObjectiveMode mode);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double base_lr = 0.01;
  double momentum = 0.9;
  double gamma = 0.001;
  double power = 1.0;
  double weight_decay = 0.001;
  int batch_size = 50;
  long max_iterations = 100000;
  std::uint64_t seed = 0;
  bool augment = true;
  double augment_translation = 2.0;  // max |offset| per axis, Angstroms

  void validate() const;
};

// lr(t) = base_lr * (1 + gamma t)^-power
double learning_rate(const TrainConfig& cfg, long t);

struct TrainExample {
  const Receptor* receptor = nullptr;  // borrowed; may be null for no receptor
  std::vector<Vec3> ligand_coords;
  std::vector<int> ligand_types;
  int label = 0;  // BINDING_CLASS or NONBINDING_CLASS
  Vec3 grid_center;
};

// Rigid jitter applied to the whole protein-ligand pose before gridding.
struct PoseJitter {
  Mat3 rotation;
  Vec3 translation;
};
PoseJitter draw_pose_jitter(Rng& rng, double max_translation);
void apply_pose_jitter(std::vector<Vec3>& coords, const Vec3& center, const PoseJitter& jitter);

// Balanced batch index source: half the batch from each class, each class
// cycling through its own reshuffled pool (minority oversampled by cycling).
class BatchSampler {
 public:
  BatchSampler(std::span<const int> labels, int batch_size, Rng& rng);
  std::vector<int> next_batch();

 private:
  int draw(int cls);
  int batch_size_;
  Rng& rng_;
  std::array<std::vector<int>, 2> pools_;
  std::array<std::size_t, 2> cursor_{0, 0};
};

struct LossTraceRow {
  long iteration;
  double lr;
  double loss;      // mean batch cross-entropy (data term)
  double accuracy;  // batch argmax accuracy
};

struct TrainResult {
  std::vector<LossTraceRow> trace;
};

// SGD with momentum, inverse LR decay, balanced batches, per-example pose
// jitter. L2 decay applies to conv/dense weights, not biases. Bit-for-bit
// reproducible for a fixed seed regardless of thread count.
TrainResult train(NetworkModel& model, std::span<const TrainExample> examples,
                  const GridSpec& geometry, const AtomTypeTable& table, const TrainConfig& cfg);

// Fraction of examples whose argmax class matches the label (no jitter).
double evaluate_accuracy(const NetworkModel& model, std::span<const TrainExample> examples,
                         const GridSpec& geometry, const AtomTypeTable& table);

void write_loss_trace_csv(const std::string& path, const TrainResult& result);

// ---------------------------------------------------------------------------
// Serialization: magic, version, geometry echo, layer shape table, then the
// little-endian float64 payload.

void save_model(const std::string& path, const NetworkModel& model, double edge_length,
                double resolution);

struct LoadedModel {
  NetworkModel model;
  double edge_length = 0.0;
  double resolution = 0.0;
};

// expected_channels >= 0 enforces the channel count and names both sides in
// the error message.
LoadedModel load_model(const std::string& path, int expected_channels = -1);

}  // namespace gridock

#endif
