#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "pidamage/config.hpp"
#include "pidamage/io.hpp"
#include "tempdir.hpp"

using namespace pidamage;

namespace {

FleetDataset small_dataset() {
  FleetOptions o;
  o.spec.planes_per_mix = 3;
  o.years = 1;
  o.inspection_year = 1;
  o.inspection_count = 4;
  o.seed = 5;
  return make_fleet_dataset(o);
}

}  // namespace

TEST(Csv, SeriesRoundTripIsBitExact) {
  TempDir dir;
  const std::vector<std::vector<double>> s{{0.1, 1.0 / 3.0, 5e-300}, {std::nextafter(0.005, 1.0), 2.0, 3.0}};
  write_truth(dir / "t.csv", s);
  EXPECT_EQ(read_truth(dir / "t.csv"), s);
}

TEST(Csv, SeriesLayoutIsOneRowPerPlaneAndCycle) {
  TempDir dir;
  const std::vector<std::vector<double>> h{{92.5, 130.0}, {100.0, 110.0}};
  write_histories(dir / "h.csv", h);
  EXPECT_EQ(slurp(dir / "h.csv"),
            "plane_id,cycle_index,delta_s_mpa\n0,1,92.5\n0,2,130\n1,1,100\n1,2,110\n");
}

TEST(Csv, CrlfAndTrailingBlankLinesAreAccepted) {
  TempDir dir;
  spit(dir / "h.csv", "plane_id,cycle_index,delta_s_mpa\r\n0,1,92.5\r\n0,2,130\r\n\r\n");
  EXPECT_EQ(read_histories(dir / "h.csv"), (std::vector<std::vector<double>>{{92.5, 130.0}}));
}

TEST(Csv, MalformedFilesAreDataErrorsWithLineNumbers) {
  TempDir dir;
  const auto p = dir / "h.csv";
  spit(p, "plane,cycle,ds\n0,1,92.5\n");
  EXPECT_THROW(read_histories(p), DataError);
  spit(p, "plane_id,cycle_index,delta_s_mpa\n0,1,abc\n");
  try {
    read_histories(p);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  spit(p, "plane_id,cycle_index,delta_s_mpa\n0,1,92.5,7\n");
  EXPECT_THROW(read_histories(p), DataError);
  spit(p, "plane_id,cycle_index,delta_s_mpa\n0,2,92.5\n");
  EXPECT_THROW(read_histories(p), DataError);
  spit(p, "plane_id,cycle_index,delta_s_mpa\n1,1,92.5\n");
  EXPECT_THROW(read_histories(p), DataError);
  spit(p, "plane_id,cycle_index,delta_s_mpa\n0,1,nan\n");
  EXPECT_THROW(read_histories(p), DataError);
  spit(p, "plane_id,cycle_index,delta_s_mpa\n");
  EXPECT_THROW(read_histories(p), DataError);
  EXPECT_THROW(read_histories(dir / "missing.csv"), DataError);
}

TEST(Csv, InspectionsRoundTripAndValidate) {
  TempDir dir;
  const std::vector<Inspection> obs{{2, 0.0101}, {7, 0.0123}};
  write_inspections(dir / "i.csv", obs);
  EXPECT_EQ(slurp(dir / "i.csv"), "plane_id,crack_m\n2,0.0101\n7,0.0123\n");
  const auto back = read_inspections(dir / "i.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].plane_id, 7u);
  EXPECT_EQ(back[1].crack, 0.0123);
  spit(dir / "i.csv", "plane_id,crack_m\n7,0.01\n2,0.01\n");
  EXPECT_THROW(read_inspections(dir / "i.csv"), DataError);
  spit(dir / "i.csv", "plane_id,crack_m\n1,-0.01\n");
  EXPECT_THROW(read_inspections(dir / "i.csv"), DataError);
}

TEST(Dataset, SaveLoadRoundTrip) {
  TempDir dir;
  const auto d = small_dataset();
  save_dataset(d, dir.path());
  const auto back = load_dataset(dir.path());
  EXPECT_EQ(back.histories, d.histories);
  EXPECT_EQ(back.true_crack, d.true_crack);
  ASSERT_EQ(back.inspections.size(), d.inspections.size());
  for (std::size_t i = 0; i < d.inspections.size(); ++i) {
    EXPECT_EQ(back.inspections[i].plane_id, d.inspections[i].plane_id);
    EXPECT_EQ(back.inspections[i].crack, d.inspections[i].crack);
  }
  EXPECT_EQ(back.airplanes.size(), d.airplanes.size());
  EXPECT_EQ(back.strategy, d.strategy);
  EXPECT_EQ(manifest_hash(manifest_json(back)), manifest_hash(manifest_json(d)));
}

TEST(Dataset, ManifestRecordsGenerationInputs) {
  const auto m = manifest_json(small_dataset());
  EXPECT_EQ(m.at("seed"), 5);
  EXPECT_EQ(m.at("years"), 1);
  EXPECT_EQ(m.at("paris").at("m"), 3.8);
  EXPECT_EQ(m.at("inspection").at("strategy"), "representative");
  EXPECT_EQ(m.at("fleet").at("planes_per_mix"), 3);
  EXPECT_EQ(m.at("files").at("truth"), "truth.csv");
}

TEST(Dataset, HashIsStableAndSensitive) {
  const auto d = small_dataset();
  const auto h = manifest_hash(manifest_json(d));
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h, manifest_hash(manifest_json(small_dataset())));
  auto other = d;
  other.seed = 6;
  EXPECT_NE(h, manifest_hash(manifest_json(other)));
}

TEST(Dataset, ShapeMismatchIsADataError) {
  TempDir dir;
  auto d = small_dataset();
  save_dataset(d, dir.path());
  auto short_hist = d.histories;
  short_hist[0].pop_back();
  write_histories(dir / "histories.csv", short_hist);
  EXPECT_THROW(load_dataset(dir.path()), DataError);
  save_dataset(d, dir.path());
  spit(dir / "inspections.csv", "plane_id,crack_m\n99,0.01\n");
  EXPECT_THROW(load_dataset(dir.path()), DataError);
  save_dataset(d, dir.path());
  spit(dir / "manifest.json", "{\"seed\": 1}");
  EXPECT_THROW(load_dataset(dir.path()), DataError);
  spit(dir / "manifest.json", "{not json");
  EXPECT_THROW(load_dataset(dir.path()), DataError);
}

TEST(Checkpoint, RoundTripKeepsNetworkAndHash) {
  TempDir dir;
  Normalizer n;
  n.mean = {108.0, 0.0275};
  n.std = {14.0, 0.013};
  const MlpNetwork net = build_stress_mlp(n, 4);
  write_json(dir / "c.json", checkpoint_json(net, "0123456789abcdef"));
  const auto c = load_checkpoint(dir / "c.json");
  EXPECT_EQ(c.network, net);
  EXPECT_EQ(c.manifest_hash, "0123456789abcdef");
  // Keys are emitted in sorted order, so the text is reproducible.
  const std::string text = slurp(dir / "c.json");
  EXPECT_LT(text.find("\"alpha\""), text.find("\"dense_0\""));
  EXPECT_LT(text.find("\"dense_5\""), text.find("\"manifest_hash\""));
  spit(dir / "c.json", "{}");
  EXPECT_THROW(load_checkpoint(dir / "c.json"), DataError);
}

TEST(Config, EmptyDocumentGivesDefaults) {
  const auto c = config_from_json(nlohmann::json::object());
  EXPECT_EQ(c.years, 5u);
  EXPECT_EQ(c.flights_per_day, 4u);
  EXPECT_EQ(c.fleet.fleet_size(), 300u);
  EXPECT_EQ(c.inspection.n, 60u);
  EXPECT_EQ(c.inspection.strategy, InspectionStrategy::Representative);
  EXPECT_EQ(c.paris.c, 1.5e-11);
  EXPECT_EQ(c.paris.m, 3.8);
  EXPECT_EQ(c.training.epochs, 500u);
  EXPECT_EQ(c.sweep.sizes, (std::vector<std::size_t>{5, 15, 30, 45, 60}));
}

TEST(Config, ResolvedFormRoundTrips) {
  const auto c = config_from_json(nlohmann::json::parse(
      R"({"seed": 9, "inspection": {"n": 15, "strategy": "high_biased"},
          "training": {"epochs": 3}, "fleet": {"planes_per_mix": 10}})"));
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.inspection.strategy, InspectionStrategy::HighBiased);
  EXPECT_EQ(c.fleet.fleet_size(), 30u);
  const auto j = to_json(c);
  EXPECT_EQ(to_json(config_from_json(j)), j);
}

TEST(Config, InvalidDocumentsAreConfigErrors) {
  const char* bad[] = {
      R"({"sed": 1})",
      R"({"training": {"lr": 0.1}})",
      R"({"years": "five"})",
      R"({"years": 0})",
      R"({"inspection": {"strategy": "random"}})",
      R"({"inspection": {"n": 301}})",
      R"({"inspection": {"year": 6}})",
      R"({"a0": 0.06})",
      R"({"paris": {"c": -1}})",
      R"({"training": {"learning_rate": 0}})",
      R"({"sweep": {"sizes": [0]}})",
      R"({"sweep": {"distribution_n": 1}})",
      R"([1, 2])",
  };
  for (const char* text : bad)
    EXPECT_THROW(config_from_json(nlohmann::json::parse(text)), ConfigError) << text;
}

TEST(Config, UnreadableFileIsAConfigError) {
  TempDir dir;
  EXPECT_THROW(load_config(dir / "none.json"), ConfigError);
  spit(dir / "c.json", "{oops");
  EXPECT_THROW(load_config(dir / "c.json"), ConfigError);
}

TEST(Config, SetupTakesPhysicsFromDataset) {
  auto d = small_dataset();
  d.paris.m = 3.5;
  d.a0 = 0.004;
  const auto s = config_from_json(nlohmann::json::object()).hybrid_setup(d);
  EXPECT_EQ(s.paris.m, 3.5);
  EXPECT_EQ(s.a0, 0.004);
  EXPECT_EQ(s.inspection_cycles, 1460u);
}

TEST(Config, SweepBoundsAreCheckedAgainstTheDataset) {
  const auto c = config_from_json(nlohmann::json::parse(R"({"sweep": {"sizes": [5, 60]}})"));
  EXPECT_NO_THROW(c.check_sweep(300));
  EXPECT_THROW(c.check_sweep(30), ConfigError);
}
