#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <sstream>

#include "entvec/cli.hpp"
#include "entvec/dataset.hpp"
#include "entvec/models.hpp"
#include "test_util.hpp"

using namespace entvec;

namespace {

struct CliResult {
  int status = 0;
  std::string out;
  std::string err;
};

CliResult run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  CliResult result;
  result.status = run_cli(args, out, err);
  result.out = out.str();
  result.err = err.str();
  return result;
}

std::map<std::string, std::string> parse_summary(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

// Three entities with overlapping vocabulary plus per-entity marker words.
void write_fixture(const testutil::TempDir& dir) {
  std::string corpus;
  std::string assoc;
  const char* entities[] = {"ada", "bea", "cid"};
  const char* markers[] = {"alpha", "bravo", "charlie"};
  int doc = 0;
  for (int e = 0; e < 3; ++e) {
    for (int i = 0; i < 4; ++i) {
      const std::string id = "doc" + std::to_string(doc++);
      corpus += id + "\tshared words appear often " + markers[e] + " " + markers[e] + " " +
                markers[e] + " tail\n";
      assoc += id + "\t" + std::string(entities[e]) + "\n";
    }
  }
  corpus += "doc99\tno association here\n";
  testutil::write_text(dir / "corpus.tsv", corpus);
  testutil::write_text(dir / "assoc.tsv", assoc);
  testutil::write_text(dir / "queries.tsv", "q1\talpha alpha\nq2\tcharlie\nq3\tzzz-unknown\n");
}

std::string dir_fingerprint(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    files[entry.path().filename().string()] = testutil::read_bytes(entry.path());
  std::string fingerprint;
  for (const auto& [name, bytes] : files) fingerprint += name + ":" + bytes + "\xff";
  return fingerprint;
}

}  // namespace

TEST_CASE("prepare produces a loadable dataset and a summary") {
  testutil::TempDir dir("cli-prepare");
  write_fixture(dir);
  const std::string data = (dir / "data").string();

  const CliResult result =
      run({"prepare", "--input", (dir / "corpus.tsv").string(), "--assoc",
           (dir / "assoc.tsv").string(), "--output", data, "--min-count", "2",
           "--min-token-length", "2", "--window-size", "3", "--stride", "3", "--seed", "5"});
  REQUIRE(result.status == 0);

  const auto summary = parse_summary(result.out);
  CHECK(summary.at("docs") == "13");
  CHECK(summary.at("skipped_docs") == "1");
  CHECK(summary.at("entities") == "3");

  const PackagedDataset dataset = load_dataset(data);
  CHECK(dataset.manifest.num_docs == 13);
  CHECK(dataset.manifest.num_skipped_docs == 1);
  CHECK(dataset.entity_index.size() == 3);
}

TEST_CASE("prepare argument errors exit with status 2") {
  testutil::TempDir dir("cli-prepare-err");
  write_fixture(dir);

  CHECK(run({"prepare", "--input", (dir / "corpus.tsv").string(), "--output", "x"}).status == 2);
  CHECK(run({"prepare", "--input", (dir / "corpus.tsv").string(), "--assoc",
             (dir / "missing.tsv").string(), "--output", "x"})
            .status == 2);

  const CliResult exclusive =
      run({"prepare", "--input", (dir / "corpus.tsv").string(), "--assoc",
           (dir / "assoc.tsv").string(), "--output", (dir / "out").string(), "--weighting",
           "reciprocal", "--resample"});
  CHECK(exclusive.status == 2);
  CHECK(exclusive.err.find("mutually exclusive") != std::string::npos);
  CHECK(!std::filesystem::exists(dir / "out"));
}

TEST_CASE("prepare failures leave no partial output directory") {
  testutil::TempDir dir("cli-prepare-atomic");
  write_fixture(dir);
  // A min-count high enough to filter out every token.
  const CliResult result =
      run({"prepare", "--input", (dir / "corpus.tsv").string(), "--assoc",
           (dir / "assoc.tsv").string(), "--output", (dir / "out").string(), "--min-count",
           "1000"});
  CHECK(result.status == 1);
  CHECK(result.err.find("empty vocabulary") != std::string::npos);
  CHECK(!std::filesystem::exists(dir / "out"));
  CHECK(!std::filesystem::exists(dir / "out.tmp"));
}

TEST_CASE("train writes a model directory and reports epoch losses") {
  testutil::TempDir dir("cli-train");
  write_fixture(dir);
  const std::string data = (dir / "data").string();
  REQUIRE(run({"prepare", "--input", (dir / "corpus.tsv").string(), "--assoc",
               (dir / "assoc.tsv").string(), "--output", data, "--min-count", "1",
               "--min-token-length", "1", "--window-size", "3", "--seed", "5"})
              .status == 0);

  const CliResult result = run({"train", "--data", data, "--output", (dir / "model").string(),
                                "--model", "log_linear", "--dim", "8", "--epochs", "4",
                                "--batch-size", "8", "--lr", "0.5", "--seed", "11"});
  REQUIRE(result.status == 0);
  CHECK(result.out.find("epoch=1 loss=") != std::string::npos);
  CHECK(result.out.find("epoch=4 loss=") != std::string::npos);
  CHECK(load_model(dir / "model").params.kind == ModelKind::log_linear);

  SUBCASE("window-size cross-check") {
    const CliResult mismatch =
        run({"train", "--data", data, "--output", (dir / "m2").string(), "--window-size", "4"});
    CHECK(mismatch.status == 2);
    CHECK(mismatch.err.find("4") != std::string::npos);
    CHECK(mismatch.err.find("3") != std::string::npos);
  }

  SUBCASE("same seed gives byte-identical model directories") {
    REQUIRE(run({"train", "--data", data, "--output", (dir / "ma").string(), "--model",
                 "vector_space", "--dim", "4", "--epochs", "2", "--seed", "9"})
                .status == 0);
    REQUIRE(run({"train", "--data", data, "--output", (dir / "mb").string(), "--model",
                 "vector_space", "--dim", "4", "--epochs", "2", "--seed", "9"})
                .status == 0);
    CHECK(dir_fingerprint(dir / "ma") == dir_fingerprint(dir / "mb"));
  }
}

TEST_CASE("query writes a parseable run file and diagnostics") {
  testutil::TempDir dir("cli-query");
  write_fixture(dir);
  const std::string data = (dir / "data").string();
  const std::string model = (dir / "model").string();
  REQUIRE(run({"prepare", "--input", (dir / "corpus.tsv").string(), "--assoc",
               (dir / "assoc.tsv").string(), "--output", data, "--min-count", "1",
               "--min-token-length", "1", "--window-size", "3", "--seed", "5"})
              .status == 0);
  REQUIRE(run({"train", "--data", data, "--output", model, "--model", "vector_space", "--dim",
               "8", "--epochs", "8", "--batch-size", "8", "--lr", "0.3", "--seed", "11"})
              .status == 0);

  const std::string run_path = (dir / "run.txt").string();
  const CliResult result = run({"query", "--model", model, "--queries",
                                (dir / "queries.tsv").string(), "--output", run_path, "--k", "2",
                                "--metric", "cosine", "--run-id", "t1"});
  REQUIRE(result.status == 0);
  CHECK(result.err.find("query q3: empty query after encoding") != std::string::npos);

  const auto lines = testutil::parse_trec_run(testutil::read_bytes(run_path));
  REQUIRE(lines.size() == 4);  // two valid queries, k=2 each
  CHECK(lines[0].query_id == "q1");
  CHECK(lines[0].run_id == "t1");

  SUBCASE("force-exhaustive produces the identical run file") {
    const std::string run2 = (dir / "run2.txt").string();
    REQUIRE(run({"query", "--model", model, "--queries", (dir / "queries.tsv").string(),
                 "--output", run2, "--k", "2", "--metric", "cosine", "--run-id", "t1",
                 "--force-exhaustive"})
                .status == 0);
    CHECK(testutil::read_bytes(run_path) == testutil::read_bytes(run2));
  }

  SUBCASE("representation export") {
    REQUIRE(run({"query", "--model", model, "--queries", (dir / "queries.tsv").string(),
                 "--output", (dir / "run3.txt").string(), "--export-representations",
                 (dir / "reps").string()})
                .status == 0);
    CHECK(std::filesystem::exists(dir / "reps" / "word_embeddings.npy"));
    CHECK(std::filesystem::exists(dir / "reps" / "entity_representations.labels"));
  }

  SUBCASE("argument errors") {
    CHECK(run({"query", "--model", model, "--queries", (dir / "queries.tsv").string(),
               "--output", run_path, "--k", "0"})
              .status == 2);
    const CliResult metric = run({"query", "--model", model, "--queries",
                                  (dir / "queries.tsv").string(), "--output", run_path,
                                  "--metric", "hamming"});
    CHECK(metric.status == 2);
    CHECK(metric.err.find("cosine") != std::string::npos);
  }

  SUBCASE("malformed query line exits 1 naming the line") {
    testutil::write_text(dir / "bad.tsv", "q1\tok\nbroken\n");
    const CliResult bad = run({"query", "--model", model, "--queries", (dir / "bad.tsv").string(),
                               "--output", run_path});
    CHECK(bad.status == 1);
    CHECK(bad.err.find(":2:") != std::string::npos);
  }
}

TEST_CASE("help exits zero") {
  CHECK(run({"--help"}).status == 0);
  CHECK(run({"prepare", "--help"}).status == 0);
  CHECK(run({}).status == 2);
}
