#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "entvec/errors.hpp"
#include "entvec/matrix.hpp"
#include "entvec/models.hpp"

namespace entvec {

struct Query {
  std::string id;  // non-empty, no whitespace
  std::string text;
};

struct ScoredEntity {
  std::string name;
  double score = 0.0;
  int rank = 0;

  bool operator==(const ScoredEntity&) const = default;
};

struct EntityRanking {
  std::string query_id;
  std::vector<ScoredEntity> entries;  // scores non-increasing, ranks from 1
};

enum class Metric { inner_product, cosine, euclidean };

std::string to_string(Metric metric);
Metric metric_from_string(const std::string& name);

// Metric similarity (higher is better); euclidean is negated distance. Under
// cosine a zero query vector scores 0 against everything; zero entity vectors
// are rejected at index/scoring setup.
double similarity(Metric metric, std::span<const double> a, std::span<const double> b);

// Raised when a query has no in-vocabulary tokens.
class EmptyQueryError : public Error {
 public:
  explicit EmptyQueryError(const std::string& query_id)
      : Error("query " + query_id + ": empty query after encoding") {}
};

// One matching score per entity. log_linear: log P(entity | text).
// vector_space: `metric` similarity between the projected text vector and each
// entity vector. Text longer than the training window size is split into
// windows (stride = window size, right-padded) and per-window score vectors
// are averaged.
std::vector<double> score_all(const TrainedModel& model, const Query& query, Metric metric);

// Projected query vectors, one per window; vector_space models only.
std::vector<std::vector<double>> project_query(const TrainedModel& model, const Query& query);

// Top-min(k, |E|) entities by descending score, ties by ascending name.
EntityRanking rank(std::string query_id, std::span<const double> scores,
                   const EntityIndex& entities, std::size_t k);

// Exact k-nearest-neighbor search over entity vectors: a ball tree whose
// pruning bound is loosened by a small slack so results match brute force
// bit for bit, including the (score desc, name asc) tie rule.
class KnnIndex {
 public:
  KnnIndex(MatrixD entity_vectors, std::vector<std::string> names, Metric metric);

  std::vector<ScoredEntity> query(std::span<const double> point, std::size_t k) const;

  Metric metric() const { return metric_; }
  std::size_t size() const { return names_.size(); }

 private:
  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::vector<double> centroid;
    double radius = 0.0;
    int left = -1;
    int right = -1;
  };

  int build(std::size_t begin, std::size_t end);
  double upper_bound(std::span<const double> q, double q_norm, const Node& node) const;

  Metric metric_;
  MatrixD points_;       // original vectors, used for scoring
  MatrixD tree_points_;  // normalized under cosine, used for geometry
  std::vector<std::string> names_;
  std::vector<std::size_t> order_;  // permutation into points_, leaves reference it
  std::vector<Node> nodes_;
  int root_ = -1;
};

// TREC run format: "query_id Q0 entity_name rank score run_id" per line,
// queries in input order, scores printed with 6 significant digits.
void write_trec_run(std::span<const EntityRanking> rankings, std::string_view run_id,
                    const std::filesystem::path& path);

// One NPY per representation tensor plus a .labels file (one name per line)
// for tensors whose rows are tokens or entities.
void export_representations(const TrainedModel& model, const std::filesystem::path& out_dir);

// "query_id<TAB>text" per line; '#' lines and blank lines are ignored.
std::vector<Query> load_queries(const std::filesystem::path& path);

}  // namespace entvec
