#include "memprobe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "memprobe/error.hpp"

namespace memprobe {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("train: learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("train: Adam betas must lie in [0,1)");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("train: epsilon must be positive");
  if (loss_checkpoints.empty()) throw InvalidArgument("train: at least one loss checkpoint is required");
  for (std::size_t i = 0; i < loss_checkpoints.size(); ++i) {
    if (!(loss_checkpoints[i] > 0.0)) throw InvalidArgument("train: loss checkpoints must be positive");
    if (i > 0 && !(loss_checkpoints[i] < loss_checkpoints[i - 1])) {
      throw InvalidArgument("train: loss checkpoints must be strictly decreasing");
    }
  }
  if (max_epochs == 0) throw InvalidArgument("train: max_epochs must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw InvalidArgument("train: decay_factor must lie in (0,1]");
}

namespace {

// Batch tensors are feature-major: row = feature, column = sample.
Matrix to_columns(const Dataset& data, std::span<const std::size_t> index) {
  if (data.empty() || index.empty()) throw InvalidArgument("empty dataset");
  const std::size_t d = data[index[0]].size();
  Matrix x(d, index.size());
  for (std::size_t c = 0; c < index.size(); ++c) {
    const auto& s = data[index[c]];
    if (s.size() != d) throw DimensionError("dataset samples have different lengths");
    for (std::size_t r = 0; r < d; ++r) x(r, c) = s[r];
  }
  return x;
}

// z = W a (+ b)
void affine_batch(const Matrix& w, const Vector& b, const Matrix& a, Matrix& z) {
  const std::size_t n = a.cols();
  z = Matrix(w.rows(), n);
  for (std::size_t o = 0; o < w.rows(); ++o) {
    double* zr = z.row(o).data();
    const double bias = b.empty() ? 0.0 : b[o];
    for (std::size_t j = 0; j < n; ++j) zr[j] = bias;
    const auto wr = w.row(o);
    for (std::size_t k = 0; k < w.cols(); ++k) {
      const double wk = wr[k];
      const double* ar = a.row(k).data();
      for (std::size_t j = 0; j < n; ++j) zr[j] += wk * ar[j];
    }
  }
}

// z = Wᵀ a
void affine_batch_transposed(const Matrix& w, const Matrix& a, Matrix& z) {
  const std::size_t n = a.cols();
  z = Matrix(w.cols(), n);
  for (std::size_t k = 0; k < w.rows(); ++k) {
    const auto wr = w.row(k);
    const double* ar = a.row(k).data();
    for (std::size_t i = 0; i < w.cols(); ++i) {
      const double wi = wr[i];
      double* zr = z.row(i).data();
      for (std::size_t j = 0; j < n; ++j) zr[j] += wi * ar[j];
    }
  }
}

double row_dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += a[j] * b[j];
  return s;
}

void activate(const Activation& act, const Matrix& z, Matrix& a) {
  a = z;
  for (auto& v : a.data()) v = act.apply(v);
}

struct DeepTrace {
  std::vector<Matrix> pre;   // per layer, before activation
  std::vector<Matrix> post;  // post[0] is the input, post[l+1] output of layer l
};

DeepTrace deep_forward(const AutoencoderModel& model, Matrix input) {
  DeepTrace t;
  const auto& layers = model.layers();
  t.pre.resize(layers.size());
  t.post.resize(layers.size() + 1);
  if (input.rows() != model.input_dim()) throw DimensionError("dataset width differs from model input width");
  t.post[0] = std::move(input);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    affine_batch(layers[l].weight, layers[l].bias, t.post[l], t.pre[l]);
    if (layers[l].activation) {
      activate(*layers[l].activation, t.pre[l], t.post[l + 1]);
    } else {
      t.post[l + 1] = t.pre[l];
    }
  }
  return t;
}

struct TiedTrace {
  Matrix input, pre, code, output;
};

TiedTrace tied_forward(const TiedAutoencoder& ae, Matrix input) {
  if (input.rows() != ae.input_dim()) throw DimensionError("dataset width differs from model input width");
  TiedTrace t;
  t.input = std::move(input);
  affine_batch(ae.weight, {}, t.input, t.pre);
  activate(ae.activation, t.pre, t.code);
  affine_batch_transposed(ae.weight, t.code, t.output);
  return t;
}

double sum_squared_residual(const Matrix& out, const Matrix& target) {
  double s = 0.0;
  const auto& a = out.data();
  const auto& b = target.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = a[i] - b[i];
    s += r * r;
  }
  return s;
}

double batch_loss(const Model& model, const Matrix& x) {
  const double denom = static_cast<double>(x.rows() * x.cols());
  if (const auto* deep = std::get_if<AutoencoderModel>(&model)) {
    const auto t = deep_forward(*deep, x);
    return sum_squared_residual(t.post.back(), x) / denom;
  }
  const auto t = tied_forward(std::get<TiedAutoencoder>(model), x);
  return sum_squared_residual(t.output, x) / denom;
}

// Returns the loss of the batch and fills grads (same layout as
// parameter_blocks).
double gradients_for(const Model& model, const Matrix& x, std::vector<Vector>& grads) {
  const std::size_t n = x.cols();
  const double denom = static_cast<double>(x.rows() * n);
  grads.clear();

  if (const auto* tied = std::get_if<TiedAutoencoder>(&model)) {
    const Matrix& w = tied->weight;
    const auto t = tied_forward(*tied, x);
    const double loss = sum_squared_residual(t.output, x) / denom;

    Matrix g = t.output;  // dL/d output
    for (std::size_t i = 0; i < g.data().size(); ++i) g.data()[i] = 2.0 * (g.data()[i] - x.data()[i]) / denom;

    Vector dw(w.rows() * w.cols(), 0.0);
    // Decoder path: out = Wᵀ code ⇒ dW(k,i) += Σ_j code(k,j) g(i,j); also dcode = W g.
    Matrix dcode(w.rows(), n);
    for (std::size_t k = 0; k < w.rows(); ++k) {
      const double* cr = t.code.row(k).data();
      double* dcr = dcode.row(k).data();
      const auto wr = w.row(k);
      for (std::size_t i = 0; i < w.cols(); ++i) {
        const double* gr = g.row(i).data();
        dw[k * w.cols() + i] += row_dot(cr, gr, n);
        const double wi = wr[i];
        for (std::size_t j = 0; j < n; ++j) dcr[j] += wi * gr[j];
      }
    }
    // Encoder path: pre = W x ⇒ dW(k,i) += Σ_j dpre(k,j) x(i,j).
    for (std::size_t k = 0; k < w.rows(); ++k) {
      double* dcr = dcode.row(k).data();
      const double* pr = t.pre.row(k).data();
      for (std::size_t j = 0; j < n; ++j) dcr[j] *= tied->activation.deriv(pr[j]);
      for (std::size_t i = 0; i < w.cols(); ++i) dw[k * w.cols() + i] += row_dot(dcr, x.row(i).data(), n);
    }
    grads.push_back(std::move(dw));
    return loss;
  }

  const auto& deep = std::get<AutoencoderModel>(model);
  const auto& layers = deep.layers();
  const auto t = deep_forward(deep, x);
  const double loss = sum_squared_residual(t.post.back(), x) / denom;

  Matrix g = t.post.back();
  for (std::size_t i = 0; i < g.data().size(); ++i) g.data()[i] = 2.0 * (g.data()[i] - x.data()[i]) / denom;

  // Collected back to front, reversed at the end.
  std::vector<Vector> reversed;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const Matrix& w = layer.weight;
    const Matrix& z = t.pre[l];
    const Matrix& a = t.post[l];

    Vector dslope;
    if (layer.activation) {
      const Activation& act = *layer.activation;
      if (act.kind == ActivationKind::PReLU) {
        double s = 0.0;
        for (std::size_t i = 0; i < z.data().size(); ++i) {
          if (z.data()[i] < 0.0) s += g.data()[i] * z.data()[i];
        }
        dslope.push_back(s);
      }
      for (std::size_t i = 0; i < z.data().size(); ++i) g.data()[i] *= act.deriv(z.data()[i]);
    }

    Vector dw(w.rows() * w.cols());
    Vector db;
    if (layer.has_bias()) db.assign(w.rows(), 0.0);
    Matrix gprev(w.cols(), n);
    for (std::size_t o = 0; o < w.rows(); ++o) {
      const double* gr = g.row(o).data();
      if (layer.has_bias()) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += gr[j];
        db[o] = s;
      }
      const auto wr = w.row(o);
      for (std::size_t k = 0; k < w.cols(); ++k) {
        const double* ar = a.row(k).data();
        dw[o * w.cols() + k] = row_dot(gr, ar, n);
        const double wk = wr[k];
        double* pr = gprev.row(k).data();
        for (std::size_t j = 0; j < n; ++j) pr[j] += wk * gr[j];
      }
    }
    if (!dslope.empty()) reversed.push_back(std::move(dslope));
    if (layer.has_bias()) reversed.push_back(std::move(db));
    reversed.push_back(std::move(dw));
    g = std::move(gprev);
  }
  grads.assign(std::make_move_iterator(reversed.rbegin()), std::make_move_iterator(reversed.rend()));
  return loss;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

double mse_loss(const Model& model, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("mse_loss: empty dataset");
  const auto idx = all_indices(data.size());
  return batch_loss(model, to_columns(data, idx));
}

std::vector<std::span<double>> parameter_blocks(Model& model) {
  std::vector<std::span<double>> blocks;
  if (auto* tied = std::get_if<TiedAutoencoder>(&model)) {
    blocks.emplace_back(tied->weight.data());
    return blocks;
  }
  for (auto& layer : std::get<AutoencoderModel>(model).layers()) {
    blocks.emplace_back(layer.weight.data());
    if (layer.has_bias()) blocks.emplace_back(layer.bias);
    if (layer.activation && layer.activation->kind == ActivationKind::PReLU) {
      blocks.emplace_back(&layer.activation->param, 1);
    }
  }
  return blocks;
}

std::size_t parameter_count(const Model& model) {
  Model copy = model;
  std::size_t n = 0;
  for (const auto& b : parameter_blocks(copy)) n += b.size();
  return n;
}

std::vector<Vector> backprop_gradients(const Model& model, const Dataset& batch) {
  if (batch.empty()) throw InvalidArgument("backprop_gradients: empty batch");
  std::vector<Vector> grads;
  gradients_for(model, to_columns(batch, all_indices(batch.size())), grads);
  return grads;
}

TrainResult train(Model model, const Dataset& data, const TrainConfig& config, const TrainObserver& observer) {
  config.validate();
  if (data.empty()) throw InvalidArgument("train: empty dataset");

  const std::size_t n = data.size();
  const bool full_batch = config.batch_size == 0 || config.batch_size >= n;
  const auto idx = all_indices(n);
  const Matrix full = to_columns(data, idx);

  Rng rng(config.seed);
  std::vector<std::size_t> order = idx;

  auto blocks = parameter_blocks(model);
  std::vector<Vector> m1, m2;
  for (const auto& b : blocks) {
    m1.emplace_back(b.size(), 0.0);
    m2.emplace_back(b.size(), 0.0);
  }

  TrainResult result;
  double lr = config.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t next_threshold = 0;
  double pow1 = 1.0, pow2 = 1.0;
  std::uint64_t step = 0;
  std::vector<Vector> grads;

  auto adam_step = [&] {
    ++step;
    pow1 *= config.beta1;
    pow2 *= config.beta2;
    const double c1 = 1.0 - pow1;
    const double c2 = 1.0 - pow2;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      auto p = blocks[b];
      const Vector& gb = grads[b];
      Vector& mb = m1[b];
      Vector& vb = m2[b];
      for (std::size_t i = 0; i < p.size(); ++i) {
        mb[i] = config.beta1 * mb[i] + (1.0 - config.beta1) * gb[i];
        vb[i] = config.beta2 * vb[i] + (1.0 - config.beta2) * gb[i] * gb[i];
        p[i] -= lr * (mb[i] / c1) / (std::sqrt(vb[i] / c2) + config.epsilon);
      }
    }
  };

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    // Loss of the current parameters on the full training set. In full-batch
    // mode the same pass yields the gradient.
    double loss;
    if (full_batch) {
      loss = gradients_for(model, full, grads);
    } else {
      loss = batch_loss(model, full);
    }
    if (!std::isfinite(loss)) {
      throw NumericalError("train: loss diverged (" + std::to_string(loss) + ") at epoch " + std::to_string(epoch));
    }

    const TrainLogRow row{epoch, loss, lr};
    result.log.push_back(row);
    if (observer) observer(row);
    result.final_loss = loss;
    result.epochs = epoch;

    while (next_threshold < config.loss_checkpoints.size() && loss <= config.loss_checkpoints[next_threshold]) {
      result.checkpoints.push_back({config.loss_checkpoints[next_threshold], loss, epoch, model});
      ++next_threshold;
    }
    if (next_threshold == config.loss_checkpoints.size()) {
      result.status = TrainStatus::ReachedTarget;
      break;
    }

    if (loss < best) {
      best = loss;
      since_best = 0;
    } else if (++since_best >= config.decay_patience) {
      lr = std::max(config.min_learning_rate, lr * config.decay_factor);
      since_best = 0;
    }

    if (full_batch) {
      adam_step();
    } else {
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      for (std::size_t start = 0; start < n; start += config.batch_size) {
        const std::size_t stop = std::min(n, start + config.batch_size);
        const Matrix xb = to_columns(data, std::span(order).subspan(start, stop - start));
        gradients_for(model, xb, grads);
        adam_step();
      }
    }
    result.epochs = epoch + 1;
  }

  if (result.status != TrainStatus::ReachedTarget) {
    result.final_loss = mse_loss(model, data);
  }
  result.final_model = std::move(model);
  return result;
}

TiedAutoencoder project_spectral_norm(const TiedAutoencoder& ae, double target) {
  if (!(target > 0.0)) throw InvalidArgument("project_spectral_norm: target must be positive");
  TiedAutoencoder out = ae;
  const double sigma = power_iteration_sigma_max(ae.weight, 500);
  if (sigma > target) {
    const double scale = target / sigma;
    for (auto& v : out.weight.data()) v *= scale;
  }
  return out;
}

}  // namespace memprobe
