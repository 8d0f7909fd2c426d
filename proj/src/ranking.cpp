#include "entvec/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <queue>

#include "entvec/errors.hpp"
#include "entvec/fs_util.hpp"
#include "entvec/npy.hpp"
#include "entvec/vocabulary.hpp"

namespace entvec {

namespace fs = std::filesystem;

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::inner_product:
      return "inner_product";
    case Metric::cosine:
      return "cosine";
    case Metric::euclidean:
      return "euclidean";
  }
  throw Error("unknown metric");
}

Metric metric_from_string(const std::string& name) {
  if (name == "inner_product") return Metric::inner_product;
  if (name == "cosine") return Metric::cosine;
  if (name == "euclidean") return Metric::euclidean;
  throw UsageError("unknown metric: " + name + " (valid: inner_product, cosine, euclidean)");
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

bool better(double score_a, const std::string& name_a, double score_b, const std::string& name_b) {
  if (score_a != score_b) return score_a > score_b;
  return name_a < name_b;
}

}  // namespace

double similarity(Metric metric, std::span<const double> a, std::span<const double> b) {
  switch (metric) {
    case Metric::inner_product:
      return dot(a, b);
    case Metric::cosine: {
      const double na = norm(a);
      if (na == 0.0) return 0.0;
      return dot(a, b) / (na * norm(b));
    }
    case Metric::euclidean:
      return 0.0 - distance(a, b);
  }
  throw Error("unknown metric");
}

namespace {

std::vector<std::vector<WordId>> split_query_windows(const TrainedModel& model,
                                                     const Query& query) {
  const std::vector<std::string> tokens = tokenize(query.text);
  const std::vector<WordId> ids = model.vocab.encode(tokens);
  if (ids.empty()) throw EmptyQueryError(query.id);

  std::vector<std::vector<WordId>> windows;
  const std::size_t window_size = model.window_size;
  for (std::size_t begin = 0; begin < ids.size(); begin += window_size) {
    const std::size_t end = std::min(begin + window_size, ids.size());
    std::vector<WordId> window(ids.begin() + static_cast<std::ptrdiff_t>(begin),
                               ids.begin() + static_cast<std::ptrdiff_t>(end));
    // Right-pad the final short window when a padding id exists; a short
    // window scores identically either way since padding is excluded from
    // the window average.
    if (window.size() < window_size && model.params.padding_id)
      window.resize(window_size, *model.params.padding_id);
    windows.push_back(std::move(window));
  }
  return windows;
}

}  // namespace

std::vector<std::vector<double>> project_query(const TrainedModel& model, const Query& query) {
  if (model.params.kind != ModelKind::vector_space)
    throw Error("project_query requires a vector_space model");
  const std::vector<std::vector<WordId>> windows = split_query_windows(model, query);
  std::vector<std::vector<double>> projected;
  projected.reserve(windows.size());
  for (const auto& window : windows) projected.push_back(forward_vector_space(model.params, window));
  return projected;
}

std::vector<double> score_all(const TrainedModel& model, const Query& query, Metric metric) {
  const std::vector<std::vector<WordId>> windows = split_query_windows(model, query);
  const std::size_t num_entities = model.entities.size();

  std::vector<double> scores(num_entities, 0.0);
  if (model.params.kind == ModelKind::log_linear) {
    for (const auto& window : windows) {
      const std::vector<double> probs = forward_log_linear(model.params, window);
      for (std::size_t e = 0; e < num_entities; ++e) scores[e] += std::log(probs[e]);
    }
  } else {
    for (const auto& window : windows) {
      const std::vector<double> h = forward_vector_space(model.params, window);
      for (std::size_t e = 0; e < num_entities; ++e) {
        const auto entity = model.params.entity_representations.row(e);
        if (metric == Metric::cosine && norm(entity) == 0.0)
          throw Error("entity has a zero vector under cosine metric: " +
                      model.entities.name_of(static_cast<EntityId>(e)));
        scores[e] += similarity(metric, h, entity);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(windows.size());
  for (double& s : scores) s *= inv;
  return scores;
}

EntityRanking rank(std::string query_id, std::span<const double> scores,
                   const EntityIndex& entities, std::size_t k) {
  if (k < 1) throw UsageError("k must be >= 1");
  if (scores.size() != entities.size()) throw Error("score vector length does not match entities");

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return better(scores[a], entities.name_of(static_cast<EntityId>(a)), scores[b],
                  entities.name_of(static_cast<EntityId>(b)));
  });

  EntityRanking ranking;
  ranking.query_id = std::move(query_id);
  const std::size_t take = std::min(k, scores.size());
  ranking.entries.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    ranking.entries.push_back({entities.name_of(static_cast<EntityId>(order[i])), scores[order[i]],
                               static_cast<int>(i + 1)});
  }
  return ranking;
}

KnnIndex::KnnIndex(MatrixD entity_vectors, std::vector<std::string> names, Metric metric)
    : metric_(metric), points_(std::move(entity_vectors)), names_(std::move(names)) {
  if (points_.rows() != names_.size()) throw Error("entity vector and name counts differ");
  if (points_.rows() == 0) throw Error("cannot build an index over zero entities");

  if (metric_ == Metric::cosine) {
    tree_points_ = points_;
    for (std::size_t i = 0; i < tree_points_.rows(); ++i) {
      auto row = tree_points_.row(i);
      const double n = norm(row);
      if (n == 0.0)
        throw Error("entity has a zero vector under cosine metric: " + names_[i]);
      for (double& v : row) v /= n;
    }
  } else {
    tree_points_ = points_;
  }

  order_.resize(points_.rows());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  root_ = build(0, order_.size());
}

int KnnIndex::build(std::size_t begin, std::size_t end) {
  static constexpr std::size_t kLeafSize = 16;
  const std::size_t d = tree_points_.cols();

  Node node;
  node.begin = begin;
  node.end = end;
  node.centroid.assign(d, 0.0);
  for (std::size_t i = begin; i < end; ++i) {
    const auto p = tree_points_.row(order_[i]);
    for (std::size_t j = 0; j < d; ++j) node.centroid[j] += p[j];
  }
  const double inv = 1.0 / static_cast<double>(end - begin);
  for (double& v : node.centroid) v *= inv;
  for (std::size_t i = begin; i < end; ++i)
    node.radius = std::max(node.radius, distance(tree_points_.row(order_[i]), node.centroid));
  // Absorb rounding in the radius computation so the bound stays an upper bound.
  node.radius = node.radius * (1.0 + 1e-12) + 1e-300;

  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(node));

  if (end - begin > kLeafSize) {
    std::size_t split_dim = 0;
    double best_spread = -1.0;
    for (std::size_t j = 0; j < d; ++j) {
      double lo = tree_points_(order_[begin], j);
      double hi = lo;
      for (std::size_t i = begin + 1; i < end; ++i) {
        const double v = tree_points_(order_[i], j);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        split_dim = j;
      }
    }
    // Sorted split keeps tree construction independent of the library's
    // partition internals.
    std::sort(order_.begin() + static_cast<std::ptrdiff_t>(begin),
              order_.begin() + static_cast<std::ptrdiff_t>(end),
              [&](std::size_t a, std::size_t b) {
                const double va = tree_points_(a, split_dim);
                const double vb = tree_points_(b, split_dim);
                if (va != vb) return va < vb;
                return a < b;
              });
    const std::size_t mid = begin + (end - begin) / 2;
    if (mid > begin && mid < end) {
      const int left = build(begin, mid);
      const int right = build(mid, end);
      nodes_[static_cast<std::size_t>(index)].left = left;
      nodes_[static_cast<std::size_t>(index)].right = right;
    }
  }
  return index;
}

double KnnIndex::upper_bound(std::span<const double> q, double q_norm, const Node& node) const {
  switch (metric_) {
    case Metric::inner_product:
      return dot(q, node.centroid) + node.radius * q_norm;
    case Metric::cosine:
      // q is normalized here and tree points are unit vectors.
      return dot(q, node.centroid) + node.radius;
    case Metric::euclidean:
      return 0.0 - std::max(0.0, distance(q, node.centroid) - node.radius);
  }
  throw Error("unknown metric");
}

std::vector<ScoredEntity> KnnIndex::query(std::span<const double> point, std::size_t k) const {
  if (k < 1) throw UsageError("k must be >= 1");
  if (point.size() != points_.cols()) throw Error("query vector dimension mismatch");

  const std::size_t take = std::min(k, points_.rows());
  std::vector<ScoredEntity> result;

  std::vector<double> normalized;
  std::span<const double> q = point;
  double q_norm = norm(point);
  if (metric_ == Metric::cosine) {
    if (q_norm == 0.0) {
      // Cosine against a zero query is defined as 0 for every entity, so the
      // top-k is just the k smallest names.
      std::vector<std::size_t> order(names_.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return names_[a] < names_[b]; });
      for (std::size_t i = 0; i < take; ++i)
        result.push_back({names_[order[i]], 0.0, static_cast<int>(i + 1)});
      return result;
    }
    normalized.assign(point.begin(), point.end());
    for (double& v : normalized) v /= q_norm;
    q = normalized;
    q_norm = 1.0;
  }

  struct Candidate {
    double score;
    std::size_t idx;
  };
  const auto candidate_better = [&](const Candidate& a, const Candidate& b) {
    return better(a.score, names_[a.idx], b.score, names_[b.idx]);
  };
  // Top of the heap is the worst kept candidate.
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(candidate_better)> best(
      candidate_better);

  const auto visit = [&](const auto& self, int node_index) -> void {
    const Node& node = nodes_[static_cast<std::size_t>(node_index)];
    const double bound = upper_bound(q, q_norm, node);
    if (best.size() == take) {
      // Loosened strict comparison: on ties we must still descend, since a
      // same-score candidate with a smaller name may be inside.
      const double slack = 1e-9 * (1.0 + std::abs(bound));
      if (bound + slack < best.top().score) return;
    }
    if (node.left < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        const Candidate cand{similarity(metric_, point, points_.row(idx)), idx};
        if (best.size() < take) {
          best.push(cand);
        } else if (candidate_better(cand, best.top())) {
          best.pop();
          best.push(cand);
        }
      }
      return;
    }
    const double left_bound = upper_bound(q, q_norm, nodes_[static_cast<std::size_t>(node.left)]);
    const double right_bound = upper_bound(q, q_norm, nodes_[static_cast<std::size_t>(node.right)]);
    if (left_bound >= right_bound) {
      self(self, node.left);
      self(self, node.right);
    } else {
      self(self, node.right);
      self(self, node.left);
    }
  };
  visit(visit, root_);

  result.resize(best.size());
  for (std::size_t i = best.size(); i-- > 0;) {
    result[i] = {names_[best.top().idx], best.top().score, static_cast<int>(i + 1)};
    best.pop();
  }
  return result;
}

void write_trec_run(std::span<const EntityRanking> rankings, std::string_view run_id,
                    const fs::path& path) {
  if (run_id.empty()) throw UsageError("run id must be non-empty");
  for (const char c : run_id)
    if (std::isspace(static_cast<unsigned char>(c))) throw UsageError("run id contains whitespace");

  write_file_atomically(path, [&](const fs::path& tmp) {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open run file for writing: " + path.string());
    char score_buf[64];
    for (const EntityRanking& ranking : rankings) {
      for (const ScoredEntity& entry : ranking.entries) {
        for (const char c : entry.name)
          if (std::isspace(static_cast<unsigned char>(c)))
            throw Error("entity name contains whitespace: '" + entry.name + "'");
        std::snprintf(score_buf, sizeof(score_buf), "%.6g", entry.score);
        out << ranking.query_id << " Q0 " << entry.name << ' ' << entry.rank << ' ' << score_buf
            << ' ' << run_id << '\n';
      }
    }
    if (!out) throw Error("failed writing run file: " + path.string());
  });
}

void export_representations(const TrainedModel& model, const fs::path& out_dir) {
  const std::vector<NamedTensor> tensors =
      get_representations(model.params, model.vocab, model.entities);
  write_directory_atomically(
      out_dir,
      [&](const fs::path& tmp) {
        for (const NamedTensor& tensor : tensors) {
          npy::write(tmp / (tensor.name + ".npy"), tensor.values, tensor.shape);
          if (!tensor.row_labels.empty()) {
            std::ofstream labels(tmp / (tensor.name + ".labels"), std::ios::binary);
            for (const std::string& label : tensor.row_labels) labels << label << '\n';
            if (!labels) throw Error("failed writing label file for " + tensor.name);
          }
        }
      },
      [&](const fs::path& existing) {
        if (!fs::exists(existing / "word_embeddings.npy"))
          throw Error("refusing to overwrite " + existing.string() +
                      ": not a representation export directory");
      });
}

std::vector<Query> load_queries(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open query file: " + path.string());
  std::vector<Query> queries;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw Error(path.string() + ":" + std::to_string(line_number) + ": malformed query line");
    Query query{line.substr(0, tab), line.substr(tab + 1)};
    for (const char c : query.id)
      if (std::isspace(static_cast<unsigned char>(c)))
        throw Error(path.string() + ":" + std::to_string(line_number) +
                    ": query id contains whitespace");
    queries.push_back(std::move(query));
  }
  return queries;
}

}  // namespace entvec
