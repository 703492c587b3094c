#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "pnn/insitu.hpp"
#include "pnn/model.hpp"

namespace pnn {

// ---------------------------------------------------------------------------
// Datasets

enum class DatasetKind { circle, moons, ring };

DatasetKind dataset_kind_from_string(const std::string& s);
std::string to_string(DatasetKind k);

/// Shape parameters of the synthetic 2D datasets. Points are drawn before the
/// label is assigned; coordinate noise is added afterwards.
struct DatasetShape {
  double circle_radius = 0.6;  ///< circle: class 1 inside this radius of the unit disk
  double ring_inner = 0.35;    ///< ring: class 1 for inner < r < outer
  double ring_outer = 0.75;
  double moon_offset = 0.5;    ///< moons: vertical offset of the lower moon
};

struct Dataset {
  std::string name;
  std::vector<std::vector<double>> features;
  std::vector<std::size_t> labels;
  std::size_t n_classes = 2;
  std::vector<std::size_t> train;  ///< indices into features
  std::vector<std::size_t> test;
};

/// Deterministic synthetic set of n points with an 80/20 train/test split.
Dataset make_dataset(DatasetKind kind, std::size_t n, double noise, std::uint64_t seed,
                     const DatasetShape& shape = {});

/// Delimited text: one "# kind=… n=… noise=… seed=…" header line then
/// "x1,x2,label" rows; train rows come first, split recorded in the header.
void save_dataset(const std::filesystem::path& path, const Dataset& d, const std::string& header);
Dataset load_dataset(const std::filesystem::path& path);

/// (x₁, x₂, p, p) with p = √((P − x₁² − x₂²)/2). Throws std::invalid_argument
/// when the point lies outside the disk x₁² + x₂² ≤ P.
ModeVector format_input(double x1, double x2, double P = 1.0);

/// Affinely maps the 2D features into the disk of squared radius fill·P
/// (bounding-box centre to the origin, farthest point onto the rim), then
/// formats every point.
std::vector<ModeVector> encode_points(const Dataset& d, double P = 1.0, double fill = 0.8);

/// 28×28 image with pixels in [0, 1] → centre-pad to 32×32 → 4×4 block
/// means → 8×8 → flattened, unit-normalized real vector. Throws DataError for
/// an all-zero image.
ModeVector mnist64_preprocess(std::span<const double> image);

struct IdxImages {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::vector<std::uint8_t>> images;
};

/// IDX readers for the canonical gzip (or raw) files. Throw DataError on bad
/// magic numbers, truncated payloads or unreadable files.
IdxImages read_idx_images(const std::filesystem::path& path, std::size_t limit = 0);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path, std::size_t limit = 0);

/// MNIST-64 set from train-*/t10k-* files in `dir`: the first n_train
/// training images and the first n_test test images.
Dataset load_mnist64(const std::filesystem::path& dir, std::size_t n_train, std::size_t n_test);

/// Encoded model inputs for every dataset row (2D sets via encode_points,
/// 64-dimensional sets as real vectors).
std::vector<ModeVector> encode_dataset(const Dataset& d, double P = 1.0);

// ---------------------------------------------------------------------------
// Optimizer and metrics

struct AdamState {
  double alpha = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// Parameter change for one Adam step on `grads` (descent direction).
std::vector<double> adam_step(std::span<const double> grads, AdamState& state);

/// 1 − ⟨g/‖g‖, ĝ/‖ĝ‖⟩. Throws std::invalid_argument for a zero vector.
double gradient_direction_error(std::span<const double> g, std::span<const double> g_hat);

/// 1 − |tr(Û†U)/N|².
double fidelity_error(const CMatrix& u_hat, const CMatrix& u);

/// θ and φ shifted by Normal(0, σ); φ wrapped, θ reflected back into [0, π].
MeshPhases perturb_phases(const MeshPhases& phases, double sigma, Rng& rng);

/// Optical (θ, φ) gradients of every layer, concatenated.
std::vector<double> optical_gradient(const std::vector<GradientRecord>& layers);

struct BatchGradient {
  std::vector<double> measured;   ///< mean in-situ (θ, φ) gradient
  std::vector<double> reference;  ///< mean exact (θ, φ) gradient
  std::vector<std::vector<GradientRecord>> per_example;
  double mean_loss = 0.0;  ///< loss on the measured outputs
  double direction_error = 0.0;
};

/// In-situ and exact gradients averaged over the given examples; example b
/// draws its noise from stream b of `seed`.
BatchGradient batch_gradient(const PnnModel& model, const std::vector<MeshDevice>& devices,
                             const std::vector<ModeVector>& xs, const std::vector<std::size_t>& labels,
                             const InSituOptions& opts, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training

enum class GradientSource {
  insitu,     ///< measured on the simulated device
  reference,  ///< exact gradient (digital training)
};

struct TrainConfig {
  std::size_t iterations = 1000;
  std::size_t batch_size = 1;
  double learning_rate = 0.01;
  GradientSource source = GradientSource::insitu;
  InSituOptions insitu;
  ReadoutConfig readout;
  std::uint64_t seed = 0;
  std::size_t eval_every = 10;
  bool device_eval = true;  ///< also evaluate the noisy device at eval points
  std::string config_hash;
};

struct TrainRecord {
  std::size_t iteration = 0;
  double train_cost = 0.0;  ///< mean minibatch cost measured on the device
  double gradient_direction_error = std::numeric_limits<double>::quiet_NaN();
  // evaluation points only (NaN otherwise)
  double model_train_cost = std::numeric_limits<double>::quiet_NaN();
  double model_test_cost = std::numeric_limits<double>::quiet_NaN();
  double model_train_accuracy = std::numeric_limits<double>::quiet_NaN();
  double model_test_accuracy = std::numeric_limits<double>::quiet_NaN();
  double device_test_accuracy = std::numeric_limits<double>::quiet_NaN();
  double wall_time = 0.0;  ///< seconds since the start of training
};

struct TrainLog {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<TrainRecord> records;

  const TrainRecord& last_evaluation() const;
  /// Mean gradient direction error over all iterations where it is defined.
  double mean_gradient_error() const;
  /// One JSON object per line. `with_time` false drops wall-clock fields so
  /// logs of identical runs compare byte for byte.
  void write_jsonl(std::ostream& out, bool with_time = true) const;
};

struct Evaluation {
  double cost = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate_model(const PnnModel& model, const std::vector<ModeVector>& xs,
                          const std::vector<std::size_t>& labels, const std::vector<std::size_t>& subset);

/// Classification accuracy of the model run on noisy devices.
double evaluate_device(const PnnModel& model, const std::vector<MeshDevice>& devices,
                       const std::vector<ModeVector>& xs, const std::vector<std::size_t>& labels,
                       const std::vector<std::size_t>& subset, Rng& rng);

/// Minibatch training with Adam on every mesh phase. Each iteration draws B
/// training examples (epoch-wise shuffling), averages their gradients from
/// `cfg.source`, tracks the direction error between the measured and exact
/// batch gradients, and steps. `model` is updated in place.
TrainLog train(PnnModel& model, const Dataset& data, const std::vector<ModeVector>& inputs,
               const TrainConfig& cfg);

}  // namespace pnn
