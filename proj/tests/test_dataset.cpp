#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "entvec/dataset.hpp"
#include "entvec/errors.hpp"
#include "entvec/npy.hpp"
#include "test_util.hpp"

using namespace entvec;

namespace {

struct Fixture {
  Vocabulary vocab;
  EntityIndex entities;
  std::vector<TrainingInstance> instances;
  Manifest manifest;
};

Fixture make_fixture() {
  Fixture f;
  const std::vector<Document> corpus = {{"d1", "aa bb aa cc"}, {"d2", "bb aa cc dd"}};
  FilterConfig filter;
  f.vocab = build_vocabulary(corpus, filter, true);
  f.entities = EntityIndex::from_names({"alice", "bob"});

  const WordId pad = *f.vocab.padding_id();
  for (int i = 0; i < 6; ++i) {
    TrainingInstance instance;
    instance.window.word_ids = {static_cast<WordId>(i % 3), i % 5 == 0 ? pad : WordId{1}};
    instance.window.padding = i % 5 == 0 ? 1 : 0;
    instance.entity_id = i % 2;
    instance.weight = 0.25 * (1 + i % 3);
    instance.source_doc = i % 2 ? "d2" : "d1";
    f.instances.push_back(std::move(instance));
  }

  f.manifest.window_size = 2;
  f.manifest.stride = 2;
  f.manifest.skip = 0;
  f.manifest.weighting = WeightingScheme::reciprocal_doc_length;
  f.manifest.num_docs = 2;
  f.manifest.num_skipped_docs = 0;
  f.manifest.seed = 13;
  f.manifest.parameters = {{"window-size", "2"}};
  return f;
}

}  // namespace

TEST_CASE("package writes the expected files and shapes") {
  testutil::TempDir dir("pkg");
  Fixture f = make_fixture();
  const Manifest manifest = package(f.instances, f.vocab, f.entities, f.manifest, dir / "ds");

  CHECK(manifest.num_instances == 6);
  CHECK(manifest.vocab_size == f.vocab.size());
  CHECK(manifest.num_entities == 2);

  const npy::Array windows = npy::read(dir / "ds" / kWindowsFile);
  CHECK(windows.shape == std::vector<std::size_t>{6, 2});
  const npy::Array entities = npy::read(dir / "ds" / kEntitiesArrayFile);
  CHECK(entities.shape == std::vector<std::size_t>{6});
  const npy::Array weights = npy::read(dir / "ds" / kWeightsFile);
  CHECK(weights.shape == std::vector<std::size_t>{6});
  CHECK(weights.dtype == npy::Dtype::float64);

  const PackagedDataset loaded = load_dataset(dir / "ds");
  CHECK(loaded.num_instances() == 6);
  CHECK(loaded.windows.rows() == 6);
  CHECK(loaded.windows.cols() == 2);
  CHECK(loaded.vocab.size() == f.vocab.size());
  CHECK(loaded.entity_index.names() == f.entities.names());
  CHECK(loaded.manifest.weighting == WeightingScheme::reciprocal_doc_length);
  CHECK(loaded.manifest.parameters == f.manifest.parameters);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(loaded.windows.row(i)[0] == f.instances[i].window.word_ids[0]);
    CHECK(loaded.entities[i] == f.instances[i].entity_id);
    CHECK(loaded.weights[i] == f.instances[i].weight);
  }
}

TEST_CASE("package rejects empty instance lists") {
  testutil::TempDir dir("pkg-empty");
  Fixture f = make_fixture();
  CHECK_THROWS_WITH_AS(package({}, f.vocab, f.entities, f.manifest, dir / "ds"),
                       "no training instances", Error);
  CHECK(!std::filesystem::exists(dir / "ds"));
}

TEST_CASE("package output is byte-deterministic") {
  testutil::TempDir dir("pkg-det");
  Fixture f = make_fixture();
  package(f.instances, f.vocab, f.entities, f.manifest, dir / "a");
  package(f.instances, f.vocab, f.entities, f.manifest, dir / "b");
  for (const char* name : {kWindowsFile, kEntitiesArrayFile, kWeightsFile, kVocabularyFile,
                           kEntityIndexFile, kManifestFile}) {
    CHECK(testutil::read_bytes(dir / "a" / name) == testutil::read_bytes(dir / "b" / name));
  }
}

TEST_CASE("package refuses to overwrite non-dataset directories") {
  testutil::TempDir dir("pkg-overwrite");
  Fixture f = make_fixture();
  std::filesystem::create_directories(dir / "ds");
  testutil::write_text(dir / "ds" / "unrelated.txt", "keep me");
  CHECK_THROWS_AS(package(f.instances, f.vocab, f.entities, f.manifest, dir / "ds"), Error);
  CHECK(testutil::read_bytes(dir / "ds" / "unrelated.txt") == "keep me");

  // A same-version dataset is replaced in place.
  package(f.instances, f.vocab, f.entities, f.manifest, dir / "ds2");
  package(f.instances, f.vocab, f.entities, f.manifest, dir / "ds2");
  CHECK(load_dataset(dir / "ds2").num_instances() == 6);

  // A conflicting format version is refused.
  Fixture other = make_fixture();
  other.manifest.format_version = 99;
  CHECK_THROWS_WITH_AS(package(other.instances, other.vocab, other.entities, other.manifest,
                               dir / "ds2"),
                       doctest::Contains("format_version"), Error);
}

TEST_CASE("load_dataset validates ids and weights") {
  testutil::TempDir dir("pkg-validate");
  Fixture f = make_fixture();
  package(f.instances, f.vocab, f.entities, f.manifest, dir / "ds");

  SUBCASE("entity id out of range") {
    std::vector<std::int64_t> entities(6, 0);
    entities[3] = 2;  // |E| == 2
    const std::size_t shape[] = {6};
    npy::write(dir / "ds" / kEntitiesArrayFile, entities, shape);
    CHECK_THROWS_WITH_AS(load_dataset(dir / "ds"), doctest::Contains("entity id out of range"),
                         Error);
  }
  SUBCASE("word id out of range") {
    std::vector<std::int64_t> windows(12, static_cast<std::int64_t>(f.vocab.table_size()));
    const std::size_t shape[] = {6, 2};
    npy::write(dir / "ds" / kWindowsFile, windows, shape);
    CHECK_THROWS_WITH_AS(load_dataset(dir / "ds"), doctest::Contains("word id out of range"),
                         Error);
  }
  SUBCASE("non-positive weight") {
    std::vector<double> weights(6, 1.0);
    weights[0] = 0.0;
    const std::size_t shape[] = {6};
    npy::write(dir / "ds" / kWeightsFile, weights, shape);
    CHECK_THROWS_WITH_AS(load_dataset(dir / "ds"), doctest::Contains("non-positive weight"),
                         Error);
  }
  SUBCASE("count mismatch names the field") {
    std::vector<std::int64_t> entities(5, 0);
    const std::size_t shape[] = {5};
    npy::write(dir / "ds" / kEntitiesArrayFile, entities, shape);
    CHECK_THROWS_AS(load_dataset(dir / "ds"), Error);
  }
  SUBCASE("manifest instance count mismatch") {
    std::string manifest = testutil::read_bytes(dir / "ds" / kManifestFile);
    const std::size_t pos = manifest.find("\"num_instances\": 6");
    REQUIRE(pos != std::string::npos);
    manifest.replace(pos, 18, "\"num_instances\": 7");
    testutil::write_text(dir / "ds" / kManifestFile, manifest);
    CHECK_THROWS_WITH_AS(load_dataset(dir / "ds"), doctest::Contains("num_instances"), Error);
  }
}
