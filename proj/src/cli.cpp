#include "entvec/cli.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "entvec/dataset.hpp"
#include "entvec/errors.hpp"
#include "entvec/extraction.hpp"
#include "entvec/models.hpp"
#include "entvec/ranking.hpp"
#include "entvec/vocabulary.hpp"

namespace entvec {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_loss(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// "doc_id<TAB>text", one document per line.
std::vector<Document> read_corpus(const std::filesystem::path& path) {
  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  std::size_t line_number = 0;
  for (std::string& line : read_lines(path)) {
    ++line_number;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw Error(path.string() + ":" + std::to_string(line_number) +
                  ": expected doc_id<TAB>text");
    std::string id = line.substr(0, tab);
    if (!seen.insert(id).second)
      throw Error(path.string() + ":" + std::to_string(line_number) + ": duplicate doc id " + id);
    docs.push_back({std::move(id), line.substr(tab + 1)});
  }
  if (docs.empty()) throw Error("empty corpus");
  return docs;
}

// "doc_id<TAB>entity_name", one pair per line.
std::vector<std::pair<std::string, std::string>> read_associations(
    const std::filesystem::path& path) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::size_t line_number = 0;
  for (std::string& line : read_lines(path)) {
    ++line_number;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
      throw Error(path.string() + ":" + std::to_string(line_number) +
                  ": expected doc_id<TAB>entity_name");
    pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  if (pairs.empty()) throw Error("empty association file");
  return pairs;
}

std::unordered_set<std::string> read_stopwords(const std::filesystem::path& path) {
  std::unordered_set<std::string> stopwords;
  for (std::string& line : read_lines(path)) {
    for (std::string& token : tokenize(line)) stopwords.insert(std::move(token));
  }
  return stopwords;
}

struct PrepareOptions {
  std::string input;
  std::string assoc;
  std::string output;
  std::size_t min_token_length = 2;
  std::int64_t min_count = 2;
  double max_df = 1.0;
  std::size_t max_vocab = 0;  // 0 = unlimited
  std::string stopwords_path;
  std::size_t window_size = 5;
  std::size_t stride = 0;  // 0 = window_size (consecutive windows)
  std::size_t skip = 0;
  bool pad = true;
  std::string weighting = "none";
  bool resample = false;
  std::size_t resample_target = 0;  // 0 = max per-entity count
  std::uint64_t seed = 1;
};

int cmd_prepare(const PrepareOptions& opts, std::ostream& out, std::ostream& err) {
  if (opts.weighting == "reciprocal" && opts.resample)
    throw UsageError("--weighting reciprocal and --resample are mutually exclusive");
  if (opts.weighting != "none" && opts.weighting != "reciprocal")
    throw UsageError("unknown weighting: " + opts.weighting + " (valid: none, reciprocal)");

  FilterConfig filter;
  filter.min_token_length = opts.min_token_length;
  filter.min_collection_frequency = opts.min_count;
  filter.max_document_frequency_fraction = opts.max_df;
  if (opts.max_vocab > 0) filter.max_vocabulary_size = opts.max_vocab;
  if (!opts.stopwords_path.empty()) filter.stopwords = read_stopwords(opts.stopwords_path);
  filter.validate();

  ExtractionConfig extraction;
  extraction.window_size = opts.window_size;
  extraction.stride = opts.stride == 0 ? opts.window_size : opts.stride;
  extraction.skip = opts.skip;
  extraction.pad_short_documents = opts.pad;
  extraction.validate();

  const std::vector<Document> corpus = read_corpus(opts.input);
  const AssociationTable assoc = AssociationTable::from_pairs(read_associations(opts.assoc));

  const Vocabulary vocab = build_vocabulary(corpus, filter, opts.pad);

  std::vector<TrainingInstance> instances;
  std::unordered_map<std::string, std::int64_t> doc_lengths;
  std::size_t skipped_docs = 0;
  for (const Document& doc : corpus) {
    const std::vector<WordId> ids = vocab.encode(tokenize(doc.text));
    doc_lengths[doc.id] = static_cast<std::int64_t>(ids.size());
    const std::vector<Window> windows = extract(ids, extraction, vocab.padding_id());
    std::vector<TrainingInstance> doc_instances =
        make_instances(doc.id, windows, assoc, &skipped_docs);
    instances.insert(instances.end(), std::make_move_iterator(doc_instances.begin()),
                     std::make_move_iterator(doc_instances.end()));
  }

  Manifest manifest;
  manifest.window_size = extraction.window_size;
  manifest.stride = extraction.stride;
  manifest.skip = extraction.skip;
  manifest.seed = opts.seed;
  manifest.num_docs = corpus.size();
  manifest.num_skipped_docs = skipped_docs;
  if (opts.weighting == "reciprocal") {
    manifest.weighting = WeightingScheme::reciprocal_doc_length;
    weight_reciprocal_length(instances, doc_lengths);
  } else if (opts.resample) {
    manifest.weighting = WeightingScheme::resampled;
    std::optional<std::size_t> target;
    if (opts.resample_target > 0) target = opts.resample_target;
    instances = resample_per_entity(instances, assoc.entities, target, opts.seed);
  }

  manifest.parameters = {
      {"assoc", opts.assoc},
      {"input", opts.input},
      {"max-df", format_double(opts.max_df)},
      {"max-vocab", std::to_string(opts.max_vocab)},
      {"min-count", std::to_string(opts.min_count)},
      {"min-token-length", std::to_string(opts.min_token_length)},
      {"pad", opts.pad ? "true" : "false"},
      {"resample", opts.resample ? std::to_string(opts.resample_target) : ""},
      {"seed", std::to_string(opts.seed)},
      {"skip", std::to_string(extraction.skip)},
      {"stopwords", opts.stopwords_path},
      {"stride", std::to_string(extraction.stride)},
      {"weighting", opts.weighting},
      {"window-size", std::to_string(extraction.window_size)},
  };

  manifest = package(instances, vocab, assoc.entities, manifest, opts.output);

  if (skipped_docs > 0)
    err << "note: " << skipped_docs << " document(s) had no entity association\n";
  out << "docs=" << manifest.num_docs << '\n';
  out << "skipped_docs=" << manifest.num_skipped_docs << '\n';
  out << "instances=" << manifest.num_instances << '\n';
  out << "vocab_size=" << manifest.vocab_size << '\n';
  out << "entities=" << manifest.num_entities << '\n';
  return 0;
}

struct TrainOptions {
  std::string data;
  std::string output;
  std::string model = "log_linear";
  std::size_t dim = 64;
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double learning_rate = 0.1;
  std::size_t negatives = 5;
  double init_scale = 0.1;
  std::size_t window_size = 0;  // 0 = take from the dataset manifest
  std::uint64_t seed = 1;
};

int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream&) {
  const PackagedDataset dataset = load_dataset(opts.data);

  ModelConfig config;
  config.kind = model_kind_from_string(opts.model);
  config.dim = opts.dim;
  config.batch_size = opts.batch_size;
  config.epochs = opts.epochs;
  config.learning_rate = opts.learning_rate;
  config.negatives = opts.negatives;
  config.init_scale = opts.init_scale;
  config.seed = opts.seed;
  if (opts.window_size != 0 && opts.window_size != dataset.manifest.window_size)
    throw UsageError("window size " + std::to_string(opts.window_size) +
                     " does not match dataset window size " +
                     std::to_string(dataset.manifest.window_size));
  config.window_size = dataset.manifest.window_size;
  config.validate();

  const TrainReport report = train(dataset, config);
  for (std::size_t i = 0; i < report.epoch_losses.size(); ++i)
    out << "epoch=" << (i + 1) << " loss=" << format_loss(report.epoch_losses[i]) << '\n';

  TrainedModel model;
  model.params = report.params;
  model.vocab = dataset.vocab;
  model.entities = dataset.entity_index;
  model.epoch_losses = report.epoch_losses;
  model.seed = config.seed;
  model.window_size = config.window_size;
  save_model(model, opts.output);
  return 0;
}

struct QueryOptions {
  std::string model;
  std::string queries;
  std::string output;
  std::size_t k = 1000;
  std::string metric = "inner_product";
  std::string run_id = "entvec";
  bool force_exhaustive = false;
  std::string export_dir;
};

int cmd_query(const QueryOptions& opts, std::ostream&, std::ostream& err) {
  if (opts.k < 1) throw UsageError("k must be >= 1");
  const Metric metric = metric_from_string(opts.metric);
  if (opts.run_id.empty()) throw UsageError("run id must be non-empty");

  const TrainedModel model = load_model(opts.model);
  const std::vector<Query> queries = load_queries(opts.queries);

  // The index applies only when the model lives in a metric vector space.
  const bool use_knn = model.params.kind == ModelKind::vector_space && !opts.force_exhaustive;
  std::optional<KnnIndex> index;
  if (use_knn)
    index.emplace(model.params.entity_representations, model.entities.names(), metric);

  std::vector<EntityRanking> rankings;
  rankings.reserve(queries.size());
  for (const Query& query : queries) {
    try {
      if (use_knn) {
        const std::vector<std::vector<double>> projected = project_query(model, query);
        if (projected.size() == 1) {
          EntityRanking ranking;
          ranking.query_id = query.id;
          ranking.entries = index->query(projected[0], opts.k);
          rankings.push_back(std::move(ranking));
          continue;
        }
        // Multi-window queries average per-window score vectors, which no
        // single index probe can answer; fall back to exhaustive scoring.
      }
      const std::vector<double> scores = score_all(model, query, metric);
      rankings.push_back(rank(query.id, scores, model.entities, opts.k));
    } catch (const EmptyQueryError& e) {
      err << "warning: " << e.what() << '\n';
    }
  }

  write_trec_run(rankings, opts.run_id, opts.output);
  if (!opts.export_dir.empty()) export_representations(model, opts.export_dir);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{
      "entvec: learns vector representations of words and entities from a "
      "document collection with document-entity associations, then ranks "
      "entities against text queries"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a TOML/INI file (flags take precedence)");

  PrepareOptions prepare;
  CLI::App* prepare_cmd = app.add_subcommand(
      "prepare", "Build the vocabulary, extract windows and package a training dataset");
  prepare_cmd->add_option("--input", prepare.input, "Corpus file: doc_id<TAB>text per line")
      ->required()
      ->check(CLI::ExistingFile);
  prepare_cmd
      ->add_option("--assoc", prepare.assoc, "Association file: doc_id<TAB>entity_name per line")
      ->required()
      ->check(CLI::ExistingFile);
  prepare_cmd->add_option("--output", prepare.output, "Dataset output directory")->required();
  prepare_cmd->add_option("--min-token-length", prepare.min_token_length,
                          "Minimum token length in characters");
  prepare_cmd->add_option("--min-count", prepare.min_count,
                          "Minimum collection frequency of a retained token");
  prepare_cmd->add_option("--max-df", prepare.max_df,
                          "Maximum document-frequency fraction of a retained token");
  prepare_cmd->add_option("--max-vocab", prepare.max_vocab,
                          "Keep only the most frequent tokens (0 = unlimited)");
  prepare_cmd->add_option("--stopwords", prepare.stopwords_path, "Stopword file, one per line")
      ->check(CLI::ExistingFile);
  prepare_cmd->add_option("--window-size", prepare.window_size, "Window size in tokens");
  prepare_cmd->add_option("--stride", prepare.stride,
                          "Tokens advanced between window starts (0 = window size)");
  prepare_cmd->add_option("--skip", prepare.skip,
                          "Tokens skipped after each selected token inside a window");
  prepare_cmd->add_flag("--pad,!--no-pad", prepare.pad,
                        "Right-pad windows extracted from short documents");
  prepare_cmd
      ->add_option("--weighting", prepare.weighting,
                   "Instance weighting: none or reciprocal (of document length)")
      ->check(CLI::IsMember({"none", "reciprocal"}));
  CLI::Option* resample_opt =
      prepare_cmd
          ->add_option("--resample", prepare.resample_target,
                       "Resample instances per entity, optionally to a target count")
          ->expected(0, 1);
  prepare_cmd->add_option("--seed", prepare.seed, "Seed for resampling");

  TrainOptions train_opts;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Learn word/entity representations from a packaged dataset");
  train_cmd->add_option("--data", train_opts.data, "Dataset directory written by prepare")
      ->required()
      ->check(CLI::ExistingDirectory);
  train_cmd->add_option("--output", train_opts.output, "Model output directory")->required();
  train_cmd->add_option("--model", train_opts.model, "Model kind")
      ->check(CLI::IsMember({"log_linear", "vector_space"}));
  train_cmd->add_option("--dim", train_opts.dim, "Embedding dimensionality");
  train_cmd->add_option("--epochs", train_opts.epochs, "Training epochs");
  train_cmd->add_option("--batch-size", train_opts.batch_size, "Mini-batch size");
  train_cmd->add_option("--lr", train_opts.learning_rate, "SGD learning rate");
  train_cmd->add_option("--negatives", train_opts.negatives,
                        "Negative samples per instance (vector_space)");
  train_cmd->add_option("--init-scale", train_opts.init_scale,
                        "Uniform initialization half-range");
  train_cmd->add_option("--window-size", train_opts.window_size,
                        "Cross-check against the dataset window size");
  train_cmd->add_option("--seed", train_opts.seed, "Seed for initialization and batching");

  QueryOptions query_opts;
  CLI::App* query_cmd =
      app.add_subcommand("query", "Rank entities for text queries and write a TREC run file");
  query_cmd->add_option("--model", query_opts.model, "Model directory written by train")
      ->required()
      ->check(CLI::ExistingDirectory);
  query_cmd->add_option("--queries", query_opts.queries, "Query file: query_id<TAB>text per line")
      ->required()
      ->check(CLI::ExistingFile);
  query_cmd->add_option("--output", query_opts.output, "Run file to write")->required();
  query_cmd->add_option("--k", query_opts.k, "Entities returned per query");
  query_cmd->add_option("--metric", query_opts.metric, "Vector-space similarity")
      ->check(CLI::IsMember({"inner_product", "cosine", "euclidean"}));
  query_cmd->add_option("--run-id", query_opts.run_id, "Run id written to the run file");
  query_cmd->add_flag("--force-exhaustive", query_opts.force_exhaustive,
                      "Score every entity instead of using the k-NN index");
  query_cmd->add_option("--export-representations", query_opts.export_dir,
                        "Also export representation matrices to this directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    const CLI::App* failed = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << failed->help();
    return 2;
  }

  prepare.resample = resample_opt->count() > 0;

  try {
    if (prepare_cmd->parsed()) return cmd_prepare(prepare, out, err);
    if (train_cmd->parsed()) return cmd_train(train_opts, out, err);
    if (query_cmd->parsed()) return cmd_query(query_opts, out, err);
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace entvec
