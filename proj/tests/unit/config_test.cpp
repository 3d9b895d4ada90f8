#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "cofedmid/config.hpp"

namespace cofedmid {
namespace {

constexpr const char* kMinimal =
    "# smallest accepted config\n"
    "data.source = synthetic\n"
    "fl.K = 10\n"
    "fl.T = 50\n";

std::string ErrorOf(const std::string& text) {
  try {
    ParseConfigText(text, "test.conf");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(ConfigTest, MinimalConfigGetsDefaults) {
  const ExperimentConfig c = ParseConfigText(kMinimal);
  EXPECT_EQ(c.data.source, "synthetic");
  EXPECT_EQ(c.fl.num_clients, 10u);
  EXPECT_EQ(c.fl.rounds, 50);
  EXPECT_EQ(c.fl.defense.kind, DefenseKind::kNone);
  EXPECT_EQ(c.fl.defense.recycle.intervals, 10u);
  EXPECT_EQ(c.fl.defense.recycle.t0, 10);
  EXPECT_EQ(c.fl.defense.recycle.entropy_weight, 0.005);
  EXPECT_EQ(c.data.partition, "iid");
  EXPECT_TRUE(c.fl.coalition.empty());
}

TEST(ConfigTest, FullDefenseSection) {
  const ExperimentConfig c = ParseConfigText(std::string(kMinimal) +
                                             "defense.kind = cofedmid\n"
                                             "defense.coalition = 3; 1\n"
                                             "partition.m_max = 8\n"
                                             "partition.m_min = 5\n"
                                             "partition.decay = cosine\n"
                                             "compensation.r_l = 0.1\n"
                                             "perturbation.sigma = 0.2  # trailing comment\n"
                                             "attacks.list = fedmia_2; fta_c\n");
  EXPECT_EQ(c.fl.defense.kind, DefenseKind::kCoFedMid);
  EXPECT_EQ(c.fl.coalition, (std::vector<std::size_t>{3, 1}));
  EXPECT_EQ(c.fl.defense.m_max, 8u);
  EXPECT_EQ(c.fl.defense.decay, DecaySchedule::kCosine);
  EXPECT_EQ(c.fl.defense.recycle.max_recycle_ratio, 0.1);
  EXPECT_EQ(c.fl.defense.perturb_sigma, 0.2);
  EXPECT_EQ(c.attacks, (std::vector<std::string>{"fedmia_2", "fta_c"}));
}

TEST(ConfigTest, UnknownKeyNamesKeyAndLine) {
  const std::string err = ErrorOf(std::string(kMinimal) + "fl.rounds = 3\n");
  EXPECT_NE(err.find("test.conf:5"), std::string::npos) << err;
  EXPECT_NE(err.find("fl.rounds"), std::string::npos) << err;
}

TEST(ConfigTest, CoalitionOutsideClientsNamesField) {
  const std::string err =
      ErrorOf(std::string(kMinimal) + "defense.kind = cofedmid\ndefense.coalition = 0;10\n");
  EXPECT_NE(err.find("defense.coalition"), std::string::npos) << err;
  EXPECT_NE(err.find("line 6"), std::string::npos) << err;
}

TEST(ConfigTest, InvalidValuesAreRejected) {
  EXPECT_NE(ErrorOf("data.source = synthetic\nfl.K = 10\n").find("fl.T"), std::string::npos);
  EXPECT_NE(ErrorOf(std::string(kMinimal) + "fl.lr = fast\n").find("fl.lr"), std::string::npos);
  EXPECT_NE(ErrorOf(std::string(kMinimal) + "fl.K = 4\n").find("duplicate"), std::string::npos);
  EXPECT_NE(ErrorOf(std::string(kMinimal) + "defense.kind = magic\n").find("defense.kind"),
            std::string::npos);
  EXPECT_NE(ErrorOf(std::string(kMinimal) + "attacks.list = loss_series;nope\n").find("nope"),
            std::string::npos);
  EXPECT_NE(ErrorOf(std::string(kMinimal) +
                    "defense.kind = cofedmid\ndefense.coalition = 0;1\ncompensation.t0 = 60\n")
                .find("compensation.t0"),
            std::string::npos);
  EXPECT_NE(ErrorOf(std::string(kMinimal) +
                    "defense.kind = cofedmid\ndefense.coalition = 0;1\npartition.m_max = 11\n")
                .find("partition.m_max"),
            std::string::npos);
  EXPECT_NE(ErrorOf(std::string(kMinimal) + "no equals sign\n").find("test.conf:5"),
            std::string::npos);
}

TEST(ConfigTest, SerializeThenParseIsIdentity) {
  const ExperimentConfig original = ParseConfigText(std::string(kMinimal) +
                                                    "seed = 12345678901234\n"
                                                    "fl.lr = 0.07\n"
                                                    "defense.kind = cofedmid\n"
                                                    "defense.coalition = 2;0;5\n"
                                                    "partition.decay = exp\n"
                                                    "compensation.mu = 0.0123456789\n"
                                                    "perturbation.ratio = 0.3333333333333333\n"
                                                    "attacks.adaptive = true\n");
  const std::string text = SerializeConfig(original);
  const ExperimentConfig again = ParseConfigText(text);
  EXPECT_EQ(again, original);
  EXPECT_EQ(SerializeConfig(again), text);
}

TEST(ConfigTest, ReadsFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "cofedmid_config_test.conf";
  std::ofstream(path) << kMinimal;
  EXPECT_EQ(ParseConfigFile(path.string()), ParseConfigText(kMinimal));
  std::filesystem::remove(path);
  EXPECT_THROW(ParseConfigFile(path.string()), ConfigError);
}

TEST(ConfigTest, ShippedConfigsParse) {
  for (const auto& entry : std::filesystem::directory_iterator(COFEDMID_CONFIG_DIR)) {
    if (entry.path().extension() != ".conf") continue;
    EXPECT_NO_THROW(ParseConfigFile(entry.path().string())) << entry.path();
  }
}

}  // namespace
}  // namespace cofedmid
