#include "motor/metrics.hpp"

#include "motor/text.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace motor {

std::vector<std::string> metric_tokens(const std::string& text) { return normalize_words(text); }

double recall_at_k(const std::vector<std::vector<std::int64_t>>& rankings, const std::vector<std::int64_t>& gt, int k) {
  if (rankings.size() != gt.size()) throw std::invalid_argument("recall_at_k: one ground truth per query required");
  if (k < 1) throw std::invalid_argument("recall_at_k: k must be positive");
  if (rankings.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& r = rankings[q];
    const auto end = r.begin() + std::min<std::ptrdiff_t>(k, static_cast<std::ptrdiff_t>(r.size()));
    if (std::find(r.begin(), end, gt[q]) != end) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

Ngrams count_ngrams(const std::vector<std::string>& tokens, int n) {
  Ngrams out;
  if (n < 1) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
    ++out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  }
  return out;
}

namespace {

void check_sizes(std::size_t c, std::size_t r, const char* who) {
  if (c != r) throw std::invalid_argument(std::string(who) + ": one reference set per candidate required");
}

std::vector<std::vector<std::string>> tokenize_all(const std::vector<std::string>& texts) {
  std::vector<std::vector<std::string>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(metric_tokens(t));
  return out;
}

std::size_t lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double bleu4(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references) {
  check_sizes(candidates.size(), references.size(), "bleu4");
  double matched[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  double cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto c = metric_tokens(candidates[i]);
    const auto refs = tokenize_all(references[i]);
    if (refs.empty()) throw std::invalid_argument("bleu4: empty reference set");
    cand_len += static_cast<double>(c.size());
    // Closest reference length, shorter one on ties.
    std::size_t best = refs.front().size();
    for (const auto& r : refs) {
      const auto d = [&](std::size_t L) { return L > c.size() ? L - c.size() : c.size() - L; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += static_cast<double>(best);
    for (int n = 1; n <= 4; ++n) {
      const Ngrams cn = count_ngrams(c, n);
      Ngrams max_ref;
      for (const auto& r : refs)
        for (const auto& [g, k] : count_ngrams(r, n)) max_ref[g] = std::max(max_ref[g], k);
      for (const auto& [g, k] : cn) {
        auto it = max_ref.find(g);
        matched[n - 1] += std::min(k, it == max_ref.end() ? 0 : it->second);
        total[n - 1] += k;
      }
    }
  }
  double log_p = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (matched[n] == 0.0 || total[n] == 0.0) return 0.0;
    log_p += 0.25 * std::log(matched[n] / total[n]);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_p);
}

double rouge_l(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references) {
  check_sizes(candidates.size(), references.size(), "rouge_l");
  if (candidates.empty()) return 0.0;
  constexpr double beta2 = 1.2;
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto c = metric_tokens(candidates[i]);
    double best = 0.0;
    for (const auto& r : tokenize_all(references[i])) {
      const double l = static_cast<double>(lcs(c, r));
      if (l == 0.0) continue;
      const double p = l / static_cast<double>(c.size()), rec = l / static_cast<double>(r.size());
      best = std::max(best, (1.0 + beta2) * p * rec / (rec + beta2 * p));
    }
    sum += best;
  }
  return sum / static_cast<double>(candidates.size());
}

double cider_d(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references, double sigma) {
  check_sizes(candidates.size(), references.size(), "cider_d");
  if (candidates.empty()) return 0.0;
  const double n_docs = static_cast<double>(candidates.size());
  const double log_n = std::log(n_docs);
  std::vector<std::vector<std::vector<std::string>>> refs;
  for (const auto& r : references) refs.push_back(tokenize_all(r));
  // Document frequency of each n-gram over reference sets.
  std::map<std::vector<std::string>, double> df;
  for (const auto& set : refs) {
    std::map<std::vector<std::string>, bool> seen;
    for (const auto& r : set)
      for (int n = 1; n <= 4; ++n)
        for (const auto& [g, k] : count_ngrams(r, n)) seen[g] = true;
    for (const auto& [g, b] : seen) df[g] += 1.0;
  }
  struct Vec {
    std::map<std::vector<std::string>, double> w[4];
    double norm[4] = {0, 0, 0, 0};
    std::size_t length = 0;
  };
  auto vectorize = [&](const std::vector<std::string>& toks) {
    Vec v;
    v.length = toks.size();
    for (int n = 1; n <= 4; ++n) {
      for (const auto& [g, k] : count_ngrams(toks, n)) {
        auto it = df.find(g);
        const double d = it == df.end() ? 0.0 : it->second;
        const double val = static_cast<double>(k) * (log_n - std::log(std::max(1.0, d)));
        v.w[n - 1][g] = val;
        v.norm[n - 1] += val * val;
      }
      v.norm[n - 1] = std::sqrt(v.norm[n - 1]);
    }
    return v;
  };
  auto sim = [&](const Vec& c, const Vec& r) {
    const double delta = static_cast<double>(c.length) - static_cast<double>(r.length);
    double score = 0.0;
    for (int n = 0; n < 4; ++n) {
      double dot = 0.0;
      for (const auto& [g, cv] : c.w[n]) {
        auto it = r.w[n].find(g);
        if (it != r.w[n].end()) dot += std::min(cv, it->second) * it->second;
      }
      if (c.norm[n] != 0.0 && r.norm[n] != 0.0) dot /= c.norm[n] * r.norm[n];
      else dot = 0.0;
      score += dot * std::exp(-(delta * delta) / (2.0 * sigma * sigma));
    }
    return score / 4.0;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Vec c = vectorize(metric_tokens(candidates[i]));
    if (refs[i].empty()) throw std::invalid_argument("cider_d: empty reference set");
    double s = 0.0;
    for (const auto& r : refs[i]) s += sim(c, vectorize(r));
    total += s / static_cast<double>(refs[i].size()) * 10.0;
  }
  return total / n_docs;
}

AurocResult auroc(const Matrix& scores, const Matrix& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) throw ShapeError("auroc: score/label shape mismatch");
  AurocResult out;
  double sum = 0.0;
  int defined = 0;
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    std::vector<std::pair<double, int>> v;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) v.emplace_back(scores(i, c), labels(i, c) > 0.5 ? 1 : 0);
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double pos = 0, neg = 0, rank_sum = 0;
    // Midranks for tied scores.
    for (std::size_t i = 0; i < v.size();) {
      std::size_t j = i;
      while (j < v.size() && v[j].first == v[i].first) ++j;
      const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
      for (std::size_t k = i; k < j; ++k) {
        if (v[k].second) {
          rank_sum += mid;
          ++pos;
        } else {
          ++neg;
        }
      }
      i = j;
    }
    if (pos == 0 || neg == 0) {
      out.per_class.push_back(std::numeric_limits<double>::quiet_NaN());
      ++out.skipped;
      continue;
    }
    const double a = (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
    out.per_class.push_back(a);
    sum += a;
    ++defined;
  }
  out.mean = defined ? sum / defined : std::numeric_limits<double>::quiet_NaN();
  return out;
}

F1Result f1_suite(const Matrix& probabilities, const Matrix& labels, double threshold) {
  if (probabilities.rows() != labels.rows() || probabilities.cols() != labels.cols()) throw ShapeError("f1_suite: shape mismatch");
  auto f1 = [](double tp, double fp, double fn) { return tp == 0.0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn); };
  F1Result out;
  double TP = 0, FP = 0, FN = 0;
  for (Eigen::Index c = 0; c < labels.cols(); ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < labels.rows(); ++i) {
      const bool p = probabilities(i, c) >= threshold, y = labels(i, c) > 0.5;
      tp += p && y;
      fp += p && !y;
      fn += !p && y;
    }
    out.per_class.push_back(f1(tp, fp, fn));
    TP += tp;
    FP += fp;
    FN += fn;
  }
  out.macro = out.per_class.empty() ? 0.0 : std::accumulate(out.per_class.begin(), out.per_class.end(), 0.0) / out.per_class.size();
  out.micro = f1(TP, FP, FN);
  double ex = 0.0;
  for (Eigen::Index i = 0; i < labels.rows(); ++i) {
    double tp = 0, fp = 0, fn = 0;
    for (Eigen::Index c = 0; c < labels.cols(); ++c) {
      const bool p = probabilities(i, c) >= threshold, y = labels(i, c) > 0.5;
      tp += p && y;
      fp += p && !y;
      fn += !p && y;
    }
    ex += f1(tp, fp, fn);
  }
  out.example = labels.rows() ? ex / static_cast<double>(labels.rows()) : 0.0;
  return out;
}

}  // namespace motor
