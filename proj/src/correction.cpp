#include "dosa/correction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dosa/adam.hpp"
#include "dosa/autodiff.hpp"
#include "dosa/format.hpp"
#include "dosa/perfmodel.hpp"
#include "dosa/rng.hpp"
#include "dosa/sampling.hpp"

namespace dosa::correction {

namespace {

constexpr int kW = CorrectionModel::kWidth;
constexpr int kH = CorrectionModel::kHiddenLayers;
constexpr double kLn10 = 2.302585092994046;

// tanh from supported primitives, input clamped against exp overflow.
double vtanh(double x) {
  x = std::min(20.0, std::max(-20.0, x));
  return 1.0 - 2.0 / (std::exp(2.0 * x) + 1.0);
}
ad::Var vtanh(const ad::Var& x) {
  ad::Var c = ad::vmin(ad::vmax(x, ad::Var(-20.0)), ad::Var(20.0));
  return ad::Var(1.0) - ad::Var(2.0) / (ad::exp(ad::Var(2.0) * c) + ad::Var(1.0));
}

// Forward pass over either scalar type; `p` indexes the flat parameter
// storage: kH dense layers (weights then biases) then the output row.
template <class T, class P>
T forward(const P& p, const std::array<double, kNumFeatures>& z) {
  std::array<T, kW> h;
  for (int i = 0; i < kW; ++i) h[i] = T(z[i]);
  std::size_t off = 0;
  for (int layer = 0; layer < kH; ++layer) {
    std::array<T, kW> nh;
    for (int i = 0; i < kW; ++i) {
      T acc = p[off + kW * kW + i];  // bias
      for (int j = 0; j < kW; ++j) acc = acc + p[off + i * kW + j] * h[j];
      nh[i] = vtanh(acc);
    }
    h = nh;
    off += kW * kW + kW;
  }
  T out = p[off + kW];  // output bias
  for (int j = 0; j < kW; ++j) out = out + p[off + j] * h[j];
  return out;
}

std::size_t param_count() {
  return static_cast<std::size_t>(kH) * (kW * kW + kW) + kW + 1;
}

}  // namespace

std::array<double, kNumFeatures> features(const MeasuredSample& s) {
  std::array<double, kNumFeatures> f;
  int i = 0;
  for (int d = 0; d < kNumDims; ++d)
    f[i++] = std::log(static_cast<double>(s.layer.dims[d]));
  f[i++] = std::log(static_cast<double>(s.layer.pstride));
  f[i++] = std::log(static_cast<double>(s.layer.qstride));
  for (double v : pack_free(s.mapping.factors)) f[i++] = std::log(v);
  f[i++] = std::log(s.pe_side);
  f[i++] = std::log(s.acc_words);
  f[i++] = std::log(s.sp_words);
  return f;
}

double analytical_latency(const MeasuredSample& s, const ArchTemplate& templ) {
  ArchConfig arch;
  arch.templ = templ;
  arch.pe_side = static_cast<int>(s.pe_side);
  arch.acc_words = s.acc_words;
  arch.sp_words = s.sp_words;
  arch.acc_bytes = static_cast<std::int64_t>(s.acc_words) *
                   templ.word_bytes[kLevelAcc];
  arch.sp_bytes =
      static_cast<std::int64_t>(s.sp_words) * templ.word_bytes[kLevelSp];
  return estimate_layer(s.mapping, s.layer, arch).latency;
}

CorrectionModel::CorrectionModel() : params(param_count(), 0.0) {
  feat_mean.fill(0.0);
  feat_std.fill(1.0);
}

bool CorrectionModel::is_zero() const {
  for (double p : params)
    if (p != 0.0) return false;
  return true;
}

double CorrectionModel::predict_residual(
    const std::array<double, kNumFeatures>& feat) const {
  std::array<double, kNumFeatures> z;
  for (int i = 0; i < kNumFeatures; ++i)
    z[i] = (feat[i] - feat_mean[i]) / feat_std[i];
  return forward<double>(params, z);
}

double corrected_latency(double analytical,
                         const std::array<double, kNumFeatures>& feat,
                         const CorrectionModel& model) {
  double r = model.predict_residual(feat);
  r = std::min(kLn10, std::max(-kLn10, r));
  return analytical * std::exp(r);
}

std::string CorrectionModel::serialize() const {
  std::ostringstream os;
  os << "# dosa-correction-v1\n";
  os << "features " << kNumFeatures << " width " << kWidth << " hidden "
     << kHiddenLayers << "\n";
  os << "mean";
  for (double v : feat_mean) os << " " << fmt_double(v);
  os << "\nstd";
  for (double v : feat_std) os << " " << fmt_double(v);
  os << "\nparams " << params.size() << "\n";
  for (double p : params) os << fmt_double(p) << "\n";
  return os.str();
}

CorrectionModel CorrectionModel::deserialize(const std::string& text) {
  CorrectionModel m;
  std::istringstream in(text);
  std::string tok;
  int nf = 0, w = 0, h = 0;
  // skip comments
  while (in >> tok) {
    if (tok[0] == '#') {
      std::getline(in, tok);
      continue;
    }
    break;
  }
  if (tok != "features")
    throw std::runtime_error("correction checkpoint: missing 'features'");
  in >> nf >> tok >> w >> tok >> h;
  if (nf != kNumFeatures || w != kWidth || h != kHiddenLayers)
    throw std::runtime_error("correction checkpoint: shape mismatch");
  in >> tok;
  if (tok != "mean") throw std::runtime_error("correction checkpoint: missing mean");
  for (double& v : m.feat_mean) in >> v;
  in >> tok;
  if (tok != "std") throw std::runtime_error("correction checkpoint: missing std");
  for (double& v : m.feat_std) in >> v;
  std::size_t n = 0;
  in >> tok >> n;
  if (tok != "params" || n != param_count())
    throw std::runtime_error("correction checkpoint: bad parameter block");
  for (double& p : m.params)
    if (!(in >> p))
      throw std::runtime_error("correction checkpoint: truncated parameters");
  return m;
}

CorrectionModel CorrectionModel::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open correction model: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

std::string samples_to_csv(const std::vector<MeasuredSample>& samples) {
  std::ostringstream os;
  os << "# dosa-samples-v1\n";
  os << "R,S,P,Q,C,K,N,Pstride,Qstride,sC,sK";
  for (int lvl : {1, 2})
    for (int d = 0; d < kNumDims; ++d)
      os << ",t" << lvl << kDimNames[d];
  os << ",ord1,ord2,ord3,pe_side,acc_words,sp_words,measured_cycles\n";
  for (const auto& s : samples) {
    for (int d = 0; d < kNumDims; ++d) os << s.layer.dims[d] << ",";
    os << s.layer.pstride << "," << s.layer.qstride;
    for (double v : pack_free(s.mapping.factors))
      os << "," << static_cast<std::int64_t>(v);
    for (int i = 1; i < kNumLevels; ++i)
      os << ","
         << kOrderingNames[static_cast<int>(s.mapping.ordering.level[i])];
    os << "," << static_cast<std::int64_t>(s.pe_side) << ","
       << fmt_double(s.acc_words) << "," << fmt_double(s.sp_words) << ","
       << fmt_double(s.measured_cycles) << "\n";
  }
  return os.str();
}

std::vector<MeasuredSample> parse_samples(
    const std::string& text, std::vector<std::string>* diagnostics) {
  std::vector<MeasuredSample> out;
  std::istringstream in(text);
  std::string line;
  int row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {  // column header
      header_seen = true;
      continue;
    }
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cols.push_back(c);
    constexpr std::size_t kCols = 9 + kNumFreeVars + 3 + 3 + 1;
    if (cols.size() != kCols)
      throw std::runtime_error("row " + std::to_string(row) + ": expected " +
                               std::to_string(kCols) + " columns, got " +
                               std::to_string(cols.size()));
    MeasuredSample s;
    std::size_t i = 0;
    try {
      for (int d = 0; d < kNumDims; ++d)
        s.layer.dims[d] = std::stoll(cols[i++]);
      s.layer.pstride = std::stoll(cols[i++]);
      s.layer.qstride = std::stoll(cols[i++]);
      std::array<double, kNumFreeVars> x;
      for (int j = 0; j < kNumFreeVars; ++j) x[j] = std::stod(cols[i++]);
      unpack_free(x, &s.mapping.factors);
      for (int lvl = 1; lvl < kNumLevels; ++lvl) {
        bool found = false;
        for (int o = 0; o < 3; ++o)
          if (cols[i] == kOrderingNames[o]) {
            s.mapping.ordering.level[lvl] = static_cast<Ordering>(o);
            found = true;
          }
        if (!found) throw std::invalid_argument("bad ordering " + cols[i]);
        ++i;
      }
      s.pe_side = std::stod(cols[i++]);
      s.acc_words = std::stod(cols[i++]);
      s.sp_words = std::stod(cols[i++]);
      s.measured_cycles = std::stod(cols[i++]);
    } catch (const std::exception& e) {
      throw std::runtime_error("row " + std::to_string(row) + ": " + e.what());
    }
    derive_dram_factors(&s.mapping.factors, s.layer);
    auto drop = [&](const std::string& why) {
      if (diagnostics)
        diagnostics->push_back("row " + std::to_string(row) + " dropped: " +
                               why);
    };
    if (s.measured_cycles <= 0.0) {
      drop("non-positive measured latency");
      continue;
    }
    ValidationResult vr = validate(s.mapping, s.layer);
    if (!vr) {
      drop(vr.diagnostics.empty() ? "invalid mapping" : vr.diagnostics[0]);
      continue;
    }
    out.push_back(s);
  }
  return out;
}

Dataset split_samples(std::vector<MeasuredSample> samples, std::uint64_t seed,
                      double test_fraction) {
  Rng rng(seed);
  for (std::size_t i = samples.size(); i > 1; --i)
    std::swap(samples[i - 1], samples[rng.below(i)]);
  std::size_t n_test =
      static_cast<std::size_t>(test_fraction * samples.size());
  Dataset d;
  d.test.assign(samples.begin(), samples.begin() + n_test);
  d.train.assign(samples.begin() + n_test, samples.end());
  return d;
}

Dataset load_samples(const std::string& path, const ArchTemplate& templ,
                     std::uint64_t seed, double test_fraction,
                     std::vector<std::string>* diagnostics) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open samples file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  std::vector<MeasuredSample> samples = parse_samples(ss.str(), diagnostics);
  for (auto& s : samples) s.analytical_cycles = analytical_latency(s, templ);
  return split_samples(std::move(samples), seed, test_fraction);
}

TrainResult train(const Dataset& data, const TrainConfig& config) {
  if (data.train.size() < 50)
    throw std::invalid_argument("training requires at least 50 samples, got " +
                                std::to_string(data.train.size()));
  TrainResult res;
  CorrectionModel& model = res.model;

  // Normalization statistics from the training split.
  std::vector<std::array<double, kNumFeatures>> ftrain, ftest;
  for (const auto& s : data.train) ftrain.push_back(features(s));
  for (const auto& s : data.test) ftest.push_back(features(s));
  for (int i = 0; i < kNumFeatures; ++i) {
    double mean = 0.0;
    for (const auto& f : ftrain) mean += f[i];
    mean /= static_cast<double>(ftrain.size());
    double var = 0.0;
    for (const auto& f : ftrain) var += (f[i] - mean) * (f[i] - mean);
    var /= static_cast<double>(ftrain.size());
    model.feat_mean[i] = mean;
    model.feat_std[i] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  auto normalize = [&](std::vector<std::array<double, kNumFeatures>>& fs) {
    for (auto& f : fs)
      for (int i = 0; i < kNumFeatures; ++i)
        f[i] = (f[i] - model.feat_mean[i]) / model.feat_std[i];
  };
  normalize(ftrain);
  normalize(ftest);

  auto residual = [](const MeasuredSample& s) {
    return std::log(s.measured_cycles) - std::log(s.analytical_cycles);
  };
  std::vector<double> ytrain, ytest;
  for (const auto& s : data.train) ytrain.push_back(residual(s));
  for (const auto& s : data.test) ytest.push_back(residual(s));

  Rng rng(config.seed);
  std::size_t off = 0;
  for (int layer = 0; layer <= kH; ++layer) {
    int fan_in = kW, fan_out = layer == kH ? 1 : kW;
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    int n_w = fan_in * fan_out;
    for (int j = 0; j < n_w; ++j)
      model.params[off + j] = rng.uniform(-bound, bound);
    off += n_w + fan_out;  // biases stay zero
  }

  Adam opt(model.params.size(), config.lr);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  auto mse = [&](const std::vector<std::array<double, kNumFeatures>>& fs,
                 const std::vector<double>& ys) {
    if (fs.empty()) return 0.0;
    double e = 0.0;
    for (std::size_t i = 0; i < fs.size(); ++i) {
      double d = forward<double>(model.params, fs[i]) - ys[i];
      e += d * d;
    }
    return e / static_cast<double>(fs.size());
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t b = 0; b < order.size();
         b += static_cast<std::size_t>(config.batch_size)) {
      std::size_t e = std::min(order.size(),
                               b + static_cast<std::size_t>(config.batch_size));
      ad::ObjectiveFn batch_loss = [&](ad::Tape&,
                                       const std::vector<ad::Var>& p) {
        ad::Var loss(0.0);
        for (std::size_t i = b; i < e; ++i) {
          ad::Var d = forward<ad::Var>(p, ftrain[order[i]]) -
                      ad::Var(ytrain[order[i]]);
          loss = loss + d * d;
        }
        return loss / ad::Var(static_cast<double>(e - b));
      };
      ad::EvalResult er = ad::grad(batch_loss, model.params);
      opt.step(model.params, er.grad);
    }
    double tr = mse(ftrain, ytrain);
    double te = mse(ftest, ytest);
    if (!std::isfinite(tr) || !std::isfinite(te))
      throw std::runtime_error("training diverged at epoch " +
                               std::to_string(epoch) +
                               ": non-finite loss (train=" + fmt_double(tr) +
                               ", test=" + fmt_double(te) + ")");
    res.loss_curve.emplace_back(tr, te);
  }
  return res;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    double r = 0.5 * static_cast<double>(i + j) + 1.0;  // average, 1-based
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equal vectors, size >= 2");
  std::vector<double> ra = average_ranks(a), rb = average_ranks(b);
  double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0.0 || db == 0.0) return 0.0;
  return num / std::sqrt(da * db);
}

std::vector<MeasuredSample> synthetic_samples(const Network& net,
                                              const ArchTemplate& templ,
                                              int count, std::uint64_t seed,
                                              double noise,
                                              bool structured_residual) {
  if (net.layers.empty())
    throw std::invalid_argument("synthetic_samples: network has no layers");
  Rng rng(seed);
  std::vector<MeasuredSample> out;
  for (int i = 0; i < count; ++i) {
    MeasuredSample s;
    s.layer = net.layers[rng.below(net.layers.size())].shape;
    int side = 1 << rng.below(8);
    s.pe_side = static_cast<double>(side);
    s.acc_words = std::floor(std::exp(rng.uniform(std::log(256.0),
                                                  std::log(262144.0))));
    s.sp_words = std::floor(std::exp(rng.uniform(std::log(1024.0),
                                                 std::log(1048576.0))));
    s.mapping = random_mapping(rng, s.layer, side);
    s.analytical_cycles = analytical_latency(s, templ);
    double r = 0.0;
    if (structured_residual) {
      auto z = features(s);
      // A smooth function of the hardware and spatial features, well
      // inside the one-decade clamp.
      r = 1.0 * std::tanh(z[25] - 2.0) + 0.6 * std::tanh(0.5 * z[26] - 2.0) -
          0.6 * std::tanh(z[9] + z[10] - 3.0);
    }
    double eps = noise > 0.0 ? rng.uniform(-noise, noise) : 0.0;
    s.measured_cycles = s.analytical_cycles * std::exp(r + eps);
    out.push_back(s);
  }
  return out;
}

}  // namespace dosa::correction
