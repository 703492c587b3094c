#include "pnn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <zlib.h>

namespace pnn {

// ---------------------------------------------------------------------------
// Synthetic datasets

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "circle") return DatasetKind::circle;
  if (s == "moons") return DatasetKind::moons;
  if (s == "ring") return DatasetKind::ring;
  throw std::invalid_argument("unknown dataset kind '" + s + "' (circle, moons, ring)");
}

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::circle: return "circle";
    case DatasetKind::moons: return "moons";
    case DatasetKind::ring: return "ring";
  }
  return "?";
}

namespace {

void split_80_20(Dataset& d, Rng& rng) {
  std::vector<std::size_t> idx(d.features.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(idx.size())));
  d.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  d.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
}

}  // namespace

Dataset make_dataset(DatasetKind kind, std::size_t n, double noise, std::uint64_t seed, const DatasetShape& shape) {
  if (n < 10) throw std::invalid_argument("make_dataset: need at least 10 points");
  if (!(noise >= 0.0)) throw std::invalid_argument("make_dataset: noise must be >= 0");
  Rng rng = make_stream(seed, 0xDA7A5E7ULL + static_cast<std::uint64_t>(kind));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset d;
  d.name = to_string(kind);
  d.n_classes = 2;
  d.features.reserve(n);
  d.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = 0.0, y = 0.0;
    std::size_t label = 0;
    if (kind == DatasetKind::moons) {
      const double t = kPi * unit(rng);
      label = i % 2;
      if (label == 0) {
        x = std::cos(t);
        y = std::sin(t);
      } else {
        x = 1.0 - std::cos(t);
        y = 1.0 - std::sin(t) - shape.moon_offset;
      }
    } else {
      const double r = std::sqrt(unit(rng)), a = kTwoPi * unit(rng);
      x = r * std::cos(a);
      y = r * std::sin(a);
      if (kind == DatasetKind::circle)
        label = r < shape.circle_radius ? 1 : 0;
      else
        label = (r > shape.ring_inner && r < shape.ring_outer) ? 1 : 0;
    }
    d.features.push_back({x + gaussian(rng, noise), y + gaussian(rng, noise)});
    d.labels.push_back(label);
  }
  split_80_20(d, rng);
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& d, const std::string& header) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# " << header << " train=" << d.train.size() << " test=" << d.test.size() << '\n';
  out.precision(17);
  for (const auto* part : {&d.train, &d.test})
    for (std::size_t i : *part) {
      for (double f : d.features[i]) out << f << ',';
      out << d.labels[i] << '\n';
    }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  Dataset d;
  d.name = path.stem().string();
  std::size_t n_train = 0;
  bool have_split = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("train=");
      if (pos != std::string::npos) {
        n_train = std::stoul(line.substr(pos + 6));
        have_split = true;
      }
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    try {
      while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    if (row.size() < 2) throw DataError(path.string() + ":" + std::to_string(line_no) + ": too few columns");
    const double label = row.back();
    if (label != std::floor(label) || label < 0)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad label");
    row.pop_back();
    d.labels.push_back(static_cast<std::size_t>(label));
    d.features.push_back(std::move(row));
  }
  if (d.features.empty()) throw DataError(path.string() + ": no rows");
  d.n_classes = *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  if (!have_split) n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(d.features.size())));
  if (n_train > d.features.size()) throw DataError(path.string() + ": split exceeds row count");
  for (std::size_t i = 0; i < d.features.size(); ++i) (i < n_train ? d.train : d.test).push_back(i);
  return d;
}

ModeVector format_input(double x1, double x2, double P) {
  const double r2 = x1 * x1 + x2 * x2;
  if (!(r2 <= P)) throw std::invalid_argument("format_input: point outside the power disk");
  const double p = std::sqrt((P - r2) / 2.0);
  ModeVector v(4);
  v << x1, x2, p, p;
  return v;
}

std::vector<ModeVector> encode_points(const Dataset& d, double P, double fill) {
  if (d.features.empty()) return {};
  double lo[2] = {d.features[0][0], d.features[0][1]}, hi[2] = {lo[0], lo[1]};
  for (const auto& f : d.features) {
    if (f.size() != 2) throw std::invalid_argument("encode_points: features must be 2D");
    for (int k = 0; k < 2; ++k) {
      lo[k] = std::min(lo[k], f[static_cast<std::size_t>(k)]);
      hi[k] = std::max(hi[k], f[static_cast<std::size_t>(k)]);
    }
  }
  const double cx = 0.5 * (lo[0] + hi[0]), cy = 0.5 * (lo[1] + hi[1]);
  double radius = 0.0;
  for (const auto& f : d.features) radius = std::max(radius, std::hypot(f[0] - cx, f[1] - cy));
  const double scale = radius > 0.0 ? std::sqrt(fill * P) / radius : 0.0;
  std::vector<ModeVector> out;
  out.reserve(d.features.size());
  for (const auto& f : d.features) out.push_back(format_input((f[0] - cx) * scale, (f[1] - cy) * scale, P));
  return out;
}

// ---------------------------------------------------------------------------
// MNIST

ModeVector mnist64_preprocess(std::span<const double> image) {
  if (image.size() != 28 * 28) throw std::invalid_argument("mnist64_preprocess: expected 784 pixels");
  ModeVector v = ModeVector::Zero(64);
  // 28×28 centred in 32×32 (2-pixel border), then 4×4 blocks
  for (std::size_t r = 0; r < 28; ++r)
    for (std::size_t c = 0; c < 28; ++c) {
      const std::size_t br = (r + 2) / 4, bc = (c + 2) / 4;
      v[static_cast<Eigen::Index>(br * 8 + bc)] += image[r * 28 + c] / 16.0;
    }
  const double norm = v.norm();
  if (norm == 0.0) throw DataError("mnist64_preprocess: blank image");
  return v / norm;
}

namespace {

std::vector<std::uint8_t> read_gz(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> data;
  std::uint8_t buf[1 << 16];
  int got = 0;
  while ((got = gzread(f, buf, sizeof buf)) > 0) data.insert(data.end(), buf, buf + got);
  const bool failed = got < 0;
  gzclose(f);
  if (failed) throw DataError("corrupt compressed stream in " + path.string());
  return data;
}

std::uint32_t be32(const std::vector<std::uint8_t>& d, std::size_t at) {
  return (std::uint32_t{d[at]} << 24) | (std::uint32_t{d[at + 1]} << 16) | (std::uint32_t{d[at + 2]} << 8) |
         std::uint32_t{d[at + 3]};
}

std::filesystem::path find_idx(const std::filesystem::path& dir, const std::string& stem) {
  for (const auto& candidate : {dir / (stem + ".gz"), dir / stem})
    if (std::filesystem::exists(candidate)) return candidate;
  throw DataError("missing " + (dir / (stem + ".gz")).string());
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path, std::size_t limit) {
  const auto d = read_gz(path);
  if (d.size() < 16) throw DataError(path.string() + ": truncated IDX header");
  if (be32(d, 0) != 2051) throw DataError(path.string() + ": bad image magic " + std::to_string(be32(d, 0)));
  const std::size_t count = be32(d, 4);
  IdxImages out;
  out.rows = be32(d, 8);
  out.cols = be32(d, 12);
  const std::size_t px = out.rows * out.cols;
  if (d.size() < 16 + count * px) throw DataError(path.string() + ": truncated image payload");
  const std::size_t take = limit ? std::min(limit, count) : count;
  out.images.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const auto* p = d.data() + 16 + i * px;
    out.images.emplace_back(p, p + px);
  }
  return out;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path, std::size_t limit) {
  const auto d = read_gz(path);
  if (d.size() < 8) throw DataError(path.string() + ": truncated IDX header");
  if (be32(d, 0) != 2049) throw DataError(path.string() + ": bad label magic " + std::to_string(be32(d, 0)));
  const std::size_t count = be32(d, 4);
  if (d.size() < 8 + count) throw DataError(path.string() + ": truncated label payload");
  const std::size_t take = limit ? std::min(limit, count) : count;
  return {d.begin() + 8, d.begin() + 8 + static_cast<std::ptrdiff_t>(take)};
}

Dataset load_mnist64(const std::filesystem::path& dir, std::size_t n_train, std::size_t n_test) {
  Dataset d;
  d.name = "mnist64";
  d.n_classes = 10;
  auto add = [&](const std::string& images, const std::string& labels, std::size_t n, std::vector<std::size_t>& part) {
    const auto img = read_idx_images(find_idx(dir, images), n);
    const auto lab = read_idx_labels(find_idx(dir, labels), n);
    if (img.rows != 28 || img.cols != 28) throw DataError("MNIST images must be 28×28");
    if (img.images.size() < n || lab.size() < n)
      throw DataError("MNIST files in " + dir.string() + " hold fewer than " + std::to_string(n) + " examples");
    std::vector<double> px(784);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < 784; ++k) px[k] = img.images[i][k] / 255.0;
      const ModeVector v = mnist64_preprocess(px);
      std::vector<double> f(64);
      for (Eigen::Index k = 0; k < 64; ++k) f[static_cast<std::size_t>(k)] = v[k].real();
      if (lab[i] > 9) throw DataError("MNIST label out of range");
      part.push_back(d.features.size());
      d.features.push_back(std::move(f));
      d.labels.push_back(lab[i]);
    }
  };
  add("train-images-idx3-ubyte", "train-labels-idx1-ubyte", n_train, d.train);
  add("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", n_test, d.test);
  return d;
}

std::vector<ModeVector> encode_dataset(const Dataset& d, double P) {
  if (!d.features.empty() && d.features[0].size() == 2) return encode_points(d, P);
  std::vector<ModeVector> out;
  out.reserve(d.features.size());
  for (const auto& f : d.features) {
    ModeVector v(static_cast<Eigen::Index>(f.size()));
    for (std::size_t k = 0; k < f.size(); ++k) v[static_cast<Eigen::Index>(k)] = f[k];
    const double norm = v.norm();
    if (norm == 0.0) throw DataError("encode_dataset: zero feature vector");
    out.push_back(v * (std::sqrt(P) / norm));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer and metrics

std::vector<double> adam_step(std::span<const double> grads, AdamState& s) {
  if (s.m.empty()) {
    s.m.assign(grads.size(), 0.0);
    s.v.assign(grads.size(), 0.0);
  }
  if (s.m.size() != grads.size()) throw std::invalid_argument("adam_step: gradient length changed");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  std::vector<double> delta(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    delta[i] = -s.alpha * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + s.epsilon);
  }
  return delta;
}

double gradient_direction_error(std::span<const double> g, std::span<const double> g_hat) {
  if (g.size() != g_hat.size()) throw std::invalid_argument("gradient_direction_error: length mismatch");
  double dot = 0.0, a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    dot += g[i] * g_hat[i];
    a += g[i] * g[i];
    b += g_hat[i] * g_hat[i];
  }
  if (a == 0.0 || b == 0.0) throw std::invalid_argument("gradient_direction_error: zero gradient");
  return std::clamp(1.0 - dot / std::sqrt(a * b), 0.0, 2.0);
}

double fidelity_error(const CMatrix& u_hat, const CMatrix& u) {
  if (u_hat.rows() != u.rows() || u_hat.cols() != u.cols() || u.rows() != u.cols())
    throw std::invalid_argument("fidelity_error: dimension mismatch");
  const cdouble tr = (u_hat.adjoint() * u).trace() / static_cast<double>(u.rows());
  return 1.0 - std::norm(tr);
}

MeshPhases perturb_phases(const MeshPhases& phases, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("perturb_phases: sigma must be >= 0");
  auto theta = phases.theta();
  auto phi = phases.phi();
  for (double& t : theta) {
    t = wrap_angle(t + gaussian(rng, sigma));
    if (t > kPi) t = kTwoPi - t;
  }
  for (double& p : phi) p += gaussian(rng, sigma);
  return MeshPhases(std::move(theta), std::move(phi), phases.gamma());
}

std::vector<double> optical_gradient(const std::vector<GradientRecord>& layers) {
  std::vector<double> out;
  for (const auto& g : layers) {
    const auto o = g.optical();
    out.insert(out.end(), o.begin(), o.end());
  }
  return out;
}

namespace {

std::vector<double> full_gradient(const std::vector<GradientRecord>& layers) {
  std::vector<double> out;
  for (const auto& g : layers) {
    const auto f = g.flatten();
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

void accumulate_into(std::vector<double>& acc, const std::vector<double>& v, double w) {
  if (acc.empty()) acc.assign(v.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) acc[i] += w * v[i];
}

double safe_direction_error(const std::vector<double>& g, const std::vector<double>& ref) {
  const bool zero_g = std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; });
  const bool zero_r = std::all_of(ref.begin(), ref.end(), [](double v) { return v == 0.0; });
  if (zero_g || zero_r) return std::numeric_limits<double>::quiet_NaN();
  return gradient_direction_error(g, ref);
}

}  // namespace

BatchGradient batch_gradient(const PnnModel& model, const std::vector<MeshDevice>& devices,
                             const std::vector<ModeVector>& xs, const std::vector<std::size_t>& labels,
                             const InSituOptions& opts, std::uint64_t seed) {
  if (xs.size() != labels.size() || xs.empty()) throw std::invalid_argument("batch_gradient: bad batch");
  BatchGradient out;
  const double w = 1.0 / static_cast<double>(xs.size());
  for (std::size_t b = 0; b < xs.size(); ++b) {
    Rng rng = make_stream(seed, b);
    auto res = insitu_gradient(xs[b], labels[b], model, devices, opts, rng);
    const auto ref = reference_gradient(xs[b], labels[b], model);
    accumulate_into(out.measured, optical_gradient(res.layers), w);
    accumulate_into(out.reference, optical_gradient(ref), w);
    out.mean_loss += w * res.loss;
    out.per_example.push_back(std::move(res.layers));
  }
  out.direction_error = safe_direction_error(out.measured, out.reference);
  return out;
}

// ---------------------------------------------------------------------------
// Training

const TrainRecord& TrainLog::last_evaluation() const {
  for (auto it = records.rbegin(); it != records.rend(); ++it)
    if (!std::isnan(it->model_test_accuracy)) return *it;
  throw std::logic_error("TrainLog: no evaluation recorded");
}

double TrainLog::mean_gradient_error() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records)
    if (!std::isnan(r.gradient_direction_error)) {
      sum += r.gradient_direction_error;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

void TrainLog::write_jsonl(std::ostream& out, bool with_time) const {
  auto put = [](nlohmann::json& j, const char* key, double v) {
    if (!std::isnan(v)) j[key] = v;
  };
  for (const auto& r : records) {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["iteration"] = r.iteration;
    j["train_cost"] = r.train_cost;
    put(j, "gradient_direction_error", r.gradient_direction_error);
    put(j, "model_train_cost", r.model_train_cost);
    put(j, "model_test_cost", r.model_test_cost);
    put(j, "model_train_accuracy", r.model_train_accuracy);
    put(j, "model_test_accuracy", r.model_test_accuracy);
    put(j, "device_test_accuracy", r.device_test_accuracy);
    if (with_time) j["wall_time"] = r.wall_time;
    out << j.dump() << '\n';
  }
}

Evaluation evaluate_model(const PnnModel& model, const std::vector<ModeVector>& xs,
                          const std::vector<std::size_t>& labels, const std::vector<std::size_t>& subset) {
  Evaluation e;
  if (subset.empty()) return e;
  std::size_t correct = 0;
  for (std::size_t i : subset) {
    const ModeVector y = model_output(model, xs[i]);
    e.cost += model.head.loss(y, labels[i]);
    correct += model.head.predict(y) == labels[i];
  }
  e.cost /= static_cast<double>(subset.size());
  e.accuracy = static_cast<double>(correct) / static_cast<double>(subset.size());
  return e;
}

double evaluate_device(const PnnModel& model, const std::vector<MeshDevice>& devices,
                       const std::vector<ModeVector>& xs, const std::vector<std::size_t>& labels,
                       const std::vector<std::size_t>& subset, Rng& rng) {
  if (subset.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i : subset) {
    ModeVector v = xs[i];
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      v = mesh_forward(devices[l], model.layers[l], v, rng).output;
      if (l + 1 < model.layers.size()) v = v.cwiseAbs().cast<cdouble>();
    }
    correct += model.head.predict(v) == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(subset.size());
}

TrainLog train(PnnModel& model, const Dataset& data, const std::vector<ModeVector>& inputs,
               const TrainConfig& cfg) {
  if (cfg.batch_size == 0) throw std::invalid_argument("train: batch size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
  if (data.train.empty()) throw std::invalid_argument("train: empty training set");
  if (inputs.size() != data.features.size()) throw std::invalid_argument("train: inputs/dataset size mismatch");

  const auto devices = make_devices(model, cfg.readout);
  AdamState adam;
  adam.alpha = cfg.learning_rate;
  TrainLog log;
  log.seed = cfg.seed;
  log.config_hash = cfg.config_hash;

  Rng order_rng = make_stream(cfg.seed, 0x0DDE5ULL);
  std::vector<std::size_t> order = data.train;
  std::size_t cursor = order.size();
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    std::vector<ModeVector> xs;
    std::vector<std::size_t> ys;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      xs.push_back(inputs[order[cursor]]);
      ys.push_back(data.labels[order[cursor]]);
      ++cursor;
    }

    TrainRecord rec;
    rec.iteration = it;
    std::vector<double> step_grad;
    const double w = 1.0 / static_cast<double>(xs.size());
    if (cfg.source == GradientSource::insitu) {
      const std::uint64_t batch_seed = cfg.seed ^ (0x9E3779B97F4A7C15ULL * it);
      std::vector<double> measured, reference;
      for (std::size_t b = 0; b < xs.size(); ++b) {
        Rng rng = make_stream(batch_seed, b);
        const auto res = insitu_gradient(xs[b], ys[b], model, devices, cfg.insitu, rng);
        const auto ref = reference_gradient(xs[b], ys[b], model);
        accumulate_into(step_grad, full_gradient(res.layers), w);
        accumulate_into(measured, optical_gradient(res.layers), w);
        accumulate_into(reference, optical_gradient(ref), w);
        rec.train_cost += w * res.loss;
      }
      rec.gradient_direction_error = safe_direction_error(measured, reference);
    } else {
      for (std::size_t b = 0; b < xs.size(); ++b) {
        accumulate_into(step_grad, full_gradient(reference_gradient(xs[b], ys[b], model)), w);
        rec.train_cost += w * model_loss(model, xs[b], ys[b]);
      }
    }

    const auto delta = adam_step(step_grad, adam);
    auto params = model.flatten();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] += delta[i];
    model = model.with_flat(params);

    if (it % cfg.eval_every == 0 || it == cfg.iterations) {
      const auto tr = evaluate_model(model, inputs, data.labels, data.train);
      const auto te = evaluate_model(model, inputs, data.labels, data.test);
      rec.model_train_cost = tr.cost;
      rec.model_train_accuracy = tr.accuracy;
      rec.model_test_cost = te.cost;
      rec.model_test_accuracy = te.accuracy;
      if (cfg.device_eval) {
        if (cfg.readout.ideal()) {
          rec.device_test_accuracy = te.accuracy;
        } else {
          Rng rng = make_stream(cfg.seed, 0xE7A1000000ULL + it);
          rec.device_test_accuracy = evaluate_device(model, devices, inputs, data.labels, data.test, rng);
        }
      }
    }
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.records.push_back(rec);
  }
  return log;
}

}  // namespace pnn
