#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "errors.hpp"

namespace dpt {

MixtureSpec ring_mixture_spec(std::size_t num_classes, double radius, double var,
                              std::size_t per_class, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("ring_mixture_spec: need at least 2 classes");
  if (var <= 0.0) throw ConfigError("ring_mixture_spec: variance must be positive");
  MixtureSpec spec;
  spec.num_classes = num_classes;
  spec.per_class = per_class;
  spec.seed = seed;
  for (std::size_t y = 0; y < num_classes; ++y) {
    const double angle = 2.0 * M_PI * static_cast<double>(y) / static_cast<double>(num_classes);
    spec.means.push_back({radius * std::cos(angle), radius * std::sin(angle)});
    Tensor2 cov(2, 2);
    cov.at(0, 0) = var;
    cov.at(1, 1) = var;
    spec.covs.push_back(std::move(cov));
  }
  return spec;
}

namespace {

Eigen::MatrixXd to_eigen(const Tensor2& t) {
  Eigen::MatrixXd m(t.rows, t.cols);
  for (std::size_t r = 0; r < t.rows; ++r) {
    for (std::size_t c = 0; c < t.cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.at(r, c);
    }
  }
  return m;
}

void validate_spec(const MixtureSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("mixture: need at least 2 classes");
  if (spec.means.size() != spec.num_classes || spec.covs.size() != spec.num_classes) {
    throw ConfigError("mixture: means/covs count must match num_classes");
  }
  const std::size_t d = spec.means.front().size();
  for (const auto& m : spec.means) {
    if (m.size() != d) throw ConfigError("mixture: inconsistent mean dimensions");
  }
  for (const auto& c : spec.covs) {
    if (c.rows != d || c.cols != d) throw ConfigError("mixture: covariance shape mismatch");
  }
}

}  // namespace

BayesClassifier::BayesClassifier(const MixtureSpec& spec) {
  validate_spec(spec);
  num_classes_ = spec.num_classes;
  means_ = spec.means;
  const std::size_t d = spec.means.front().size();
  const double log_prior = -std::log(static_cast<double>(num_classes_));
  for (std::size_t y = 0; y < num_classes_; ++y) {
    const Eigen::MatrixXd cov = to_eigen(spec.covs[y]);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw ConfigError("mixture: covariance of class " + std::to_string(y) +
                        " is not positive definite");
    }
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
    Tensor2 inv_t(d, d);
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) inv_t.at(r, c) = inv(r, c);
    }
    inv_covs_.push_back(std::move(inv_t));
    double log_det = 0.0;
    for (std::size_t i = 0; i < d; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    log_norms_.push_back(-0.5 * (log_det + static_cast<double>(d) * std::log(2.0 * M_PI)) +
                         log_prior);
  }
}

Vec BayesClassifier::posterior(std::span<const double> x) const {
  const std::size_t d = means_.front().size();
  Vec logp(num_classes_);
  for (std::size_t y = 0; y < num_classes_; ++y) {
    double quad = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      const double da = x[a] - means_[y][a];
      for (std::size_t b = 0; b < d; ++b) {
        quad += da * inv_covs_[y].at(a, b) * (x[b] - means_[y][b]);
      }
    }
    logp[y] = log_norms_[y] - 0.5 * quad;
  }
  const double mx = *std::max_element(logp.begin(), logp.end());
  double sum = 0.0;
  for (double& v : logp) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : logp) v /= sum;
  return logp;
}

std::size_t BayesClassifier::classify(std::span<const double> x) const {
  const Vec post = posterior(x);
  std::size_t best = 0;
  for (std::size_t y = 1; y < post.size(); ++y) {
    if (post[y] > post[best]) best = y;
  }
  return best;
}

MixtureData generate_mixture(const MixtureSpec& spec) {
  validate_spec(spec);
  if (spec.per_class == 0) throw ConfigError("mixture: per_class must be positive");
  const std::size_t d = spec.means.front().size();
  MixtureData out;
  out.data.num_classes = spec.num_classes;
  out.data.dim = d;
  out.bayes = BayesClassifier(spec);
  for (std::size_t y = 0; y < spec.num_classes; ++y) {
    const Eigen::MatrixXd cov = to_eigen(spec.covs[y]);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw ConfigError("mixture: covariance of class " + std::to_string(y) +
                        " is not positive definite");
    }
    const Eigen::MatrixXd L = llt.matrixL();
    Rng rng(Rng::derive(spec.seed, y));
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Eigen::VectorXd z(d);
      for (std::size_t k = 0; k < d; ++k) z(static_cast<Eigen::Index>(k)) = rng.normal();
      const Eigen::VectorXd v = L * z;
      Vec x(d);
      for (std::size_t k = 0; k < d; ++k) x[k] = spec.means[y][k] + v(static_cast<Eigen::Index>(k));
      out.data.xs.push_back(std::move(x));
      out.data.labels.push_back(y);
    }
  }
  return out;
}

SemiSplit split_semi(const Dataset& data, const SplitSpec& split) {
  if (split.labels_per_class == 0) throw ConfigError("split_semi: labels_per_class must be >= 1");
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.xs.size(); ++i) by_class[data.labels[i]].push_back(i);
  for (std::size_t y = 0; y < data.num_classes; ++y) {
    if (by_class[y].size() < split.labels_per_class) {
      throw ConfigError("split_semi: class " + std::to_string(y) + " has only " +
                        std::to_string(by_class[y].size()) + " items, need " +
                        std::to_string(split.labels_per_class));
    }
  }
  std::vector<bool> labeled(data.xs.size(), false);
  for (std::size_t y = 0; y < data.num_classes; ++y) {
    auto& idx = by_class[y];
    Rng rng(Rng::derive(split.seed, y));
    for (std::size_t j = 0; j < split.labels_per_class; ++j) {
      const std::size_t pick = j + rng.uniform_index(idx.size() - j);
      std::swap(idx[j], idx[pick]);
      labeled[idx[j]] = true;
    }
  }
  SemiSplit out;
  out.semi.num_classes = data.num_classes;
  out.semi.dim = data.dim;
  out.truth.labels = data.labels;
  for (std::size_t i = 0; i < data.xs.size(); ++i) {
    SemiItem item;
    item.id = static_cast<std::int64_t>(i);
    item.x = data.xs[i];
    if (labeled[i]) {
      item.label = data.labels[i];
      out.semi.labeled_idx.push_back(i);
    } else {
      out.semi.unlabeled_idx.push_back(i);
    }
    out.semi.items.push_back(std::move(item));
  }
  return out;
}

namespace {

std::string render_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

void save_records_csv(const std::filesystem::path& path, const std::vector<DataRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  const std::size_t d = records.empty() ? 0 : records.front().x.size();
  out << "id,label,provenance";
  for (std::size_t j = 1; j <= d; ++j) out << ",x_" << j;
  out << "\n";
  for (const DataRecord& r : records) {
    out << r.id << "," << r.label << "," << r.provenance;
    for (double v : r.x) out << "," << render_double(v);
    out << "\n";
  }
}

std::vector<DataRecord> load_records_csv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingArtifactError("data file not found: " + path.string());
  }
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  std::vector<std::string> head;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) head.push_back(tok);
  }
  if (head.size() < 3 || head[0] != "id" || head[1] != "label" || head[2] != "provenance") {
    throw ParseError(path.string() + ": line 1: bad header");
  }
  const std::size_t d = head.size() - 3;
  std::vector<DataRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
    if (cols.size() != 3 + d) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                       ": expected " + std::to_string(3 + d) + " columns, got " +
                       std::to_string(cols.size()));
    }
    DataRecord r;
    try {
      r.id = std::stoll(cols[0]);
      r.label = std::stoll(cols[1]);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": bad integer");
    }
    r.provenance = cols[2];
    r.x.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      char* end = nullptr;
      r.x[j] = std::strtod(cols[3 + j].c_str(), &end);
      if (end == cols[3 + j].c_str() || *end != '\0') {
        throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                         ": bad float '" + cols[3 + j] + "'");
      }
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<DataRecord> dataset_to_records(const Dataset& data) {
  std::vector<DataRecord> records;
  records.reserve(data.xs.size());
  for (std::size_t i = 0; i < data.xs.size(); ++i) {
    records.push_back({static_cast<std::int64_t>(i),
                       static_cast<std::int64_t>(data.labels[i]), "real", data.xs[i]});
  }
  return records;
}

std::vector<DataRecord> semi_to_records(const SemiDataset& semi) {
  std::vector<DataRecord> records;
  records.reserve(semi.items.size());
  for (const SemiItem& item : semi.items) {
    records.push_back({item.id,
                       item.label ? static_cast<std::int64_t>(*item.label) : -1,
                       "real", item.x});
  }
  return records;
}

}  // namespace dpt
