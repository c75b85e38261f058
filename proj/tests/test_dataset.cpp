#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "tgrasp/dataset.hpp"
#include "tgrasp/expert.hpp"
#include "tgrasp/objects.hpp"
#include "tgrasp/split.hpp"

using namespace tgrasp;

namespace {

EpisodeRecord small_record() {
  return scripted_expert_episode(find_object(default_catalog(), "cup"), Scenario::gp, 4);
}

EpisodeRecord reparsed(const EpisodeRecord& rec) {
  std::istringstream in(format_dataset(rec));
  return parse_dataset(in);
}

// Values pass through text once, after which every field is exactly representable.
EpisodeRecord quantized_record(std::size_t frames) {
  auto rec = scripted_expert_episode(find_object(default_catalog(), "cup"), Scenario::ga, 4);
  rec.frames.resize(frames);
  return reparsed(rec);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string join(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

// Rewrites the tick field of a frame line.
std::string with_tick(const std::string& line, std::int64_t tick) {
  return std::to_string(tick) + line.substr(line.find('\t'));
}

std::size_t parse_error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_dataset(in);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(Dataset, HundredFrameRoundTripIsExact) {
  const auto rec = quantized_record(100);
  ASSERT_EQ(rec.frames.size(), 100u);
  EXPECT_EQ(reparsed(rec), rec);
  EXPECT_EQ(format_dataset(reparsed(rec)), format_dataset(rec));
}

TEST(Dataset, RawValuesKeepNineDigits) {
  const auto rec = small_record();
  const auto back = reparsed(rec);
  ASSERT_EQ(back.frames.size(), rec.frames.size());
  for (std::size_t k = 0; k < rec.frames.size(); ++k) {
    for (std::size_t i = 0; i < rec.frames[k].S.size(); ++i) {
      EXPECT_LE(std::abs(back.frames[k].S[i] - rec.frames[k].S[i]), 5e-9 * std::abs(rec.frames[k].S[i]));
    }
    EXPECT_EQ(back.frames[k].label, rec.frames[k].label);
  }
}

TEST(Dataset, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "tgrasp_dataset_test";
  std::filesystem::remove_all(dir);
  const auto rec = quantized_record(50);
  const auto path = dataset_path(dir, DatasetKind::gp, "cup", 4);
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  write_dataset(path, rec);
  EXPECT_EQ(read_dataset(path), rec);
  EXPECT_TRUE(validate_file(path).empty());
  EXPECT_EQ(list_datasets(dir, DatasetKind::gp), std::vector<std::string>{path});
  EXPECT_TRUE(list_datasets(dir, DatasetKind::ga).empty());
  std::filesystem::remove_all(dir);
  EXPECT_THROW(read_dataset(path), DataError);
}

TEST(Dataset, HeaderOnlyIsEmptyEpisode) {
  EpisodeRecord rec;
  rec.header.object_name = "cup";
  std::istringstream in(format_dataset(rec));
  const auto back = parse_dataset(in);
  EXPECT_TRUE(back.frames.empty());
  EXPECT_TRUE(validate_record(back).empty());
}

TEST(Dataset, TickGapReportsLine) {
  auto lines = lines_of(format_dataset(small_record()));
  ASSERT_GE(lines.size(), 4u);
  lines[1] = with_tick(lines[1], 0);
  lines[2] = with_tick(lines[2], 1);
  lines[3] = with_tick(lines[3], 3);
  lines.resize(4);
  EXPECT_EQ(parse_error_line(join(lines)), 4u);
}

TEST(Dataset, StructuralErrors) {
  const auto good = lines_of(format_dataset(small_record()));
  EXPECT_EQ(parse_error_line(""), 1u);

  auto v2 = good;
  v2[0].replace(v2[0].find("version=1"), 9, "version=2");
  EXPECT_EQ(parse_error_line(join(v2)), 1u);

  auto short_row = good;
  short_row[2] = short_row[2].substr(0, short_row[2].rfind('\t'));
  EXPECT_EQ(parse_error_line(join(short_row)), 3u);

  auto bad_label = good;
  bad_label[3] = bad_label[3].substr(0, bad_label[3].rfind('\t')) + "\twobbly";
  EXPECT_EQ(parse_error_line(join(bad_label)), 4u);

  const std::string truncated = join(good);
  EXPECT_EQ(parse_error_line(truncated.substr(0, truncated.size() - 5)), good.size());
}

TEST(Dataset, ValidatorFlagsEachMutationClass) {
  const auto rec = small_record();
  ASSERT_TRUE(validate_record(rec).empty());

  auto neg = rec;
  neg.frames[3].S[5] = -0.5;
  neg.frames[3].dS[5] = neg.frames[3].S[5] - neg.frames[2].S[5];
  neg.frames[4].dS[5] = neg.frames[4].S[5] - neg.frames[3].S[5];
  auto issues = validate_record(neg);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].line, 5u);

  auto quat = rec;
  quat.frames[0].P[3] = 0.5;
  issues = validate_record(quat);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].line, 2u);

  auto ds = rec;
  ds.frames[6].dS[0] += 0.25;
  issues = validate_record(ds);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].line, 8u);

  auto angle = rec;
  angle.frames[1].theta_deg = 91.0;
  EXPECT_FALSE(validate_record(angle).empty());
}

TEST(Split, EightTwoAndDeterministic) {
  std::vector<int> items(10);
  for (int i = 0; i < 10; ++i) items[i] = i;
  const auto a = split_dataset(items, 5);
  EXPECT_EQ(a.train.size(), 8u);
  EXPECT_EQ(a.val.size(), 2u);
  const auto b = split_dataset(items, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  auto all = a.train;
  all.insert(all.end(), a.val.begin(), a.val.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, items);
  EXPECT_EQ(split_dataset(std::vector<int>(7), 1).train.size(), 5u);
  EXPECT_THROW(split_dataset(std::vector<int>(4), 1), DataError);
}

TEST(Expert, EpisodesAreDeterministicAndValid) {
  for (const auto& o : test_objects()) {
    for (auto sc : {Scenario::gp, Scenario::stab_pos, Scenario::stab_neg, Scenario::ga}) {
      const auto a = scripted_expert_episode(o, sc, 21);
      EXPECT_EQ(format_dataset(a), format_dataset(scripted_expert_episode(o, sc, 21)));
      EXPECT_TRUE(validate_record(a).empty()) << o.name << " " << to_string(sc);
    }
  }
}

TEST(Expert, NegativeEpisodesEndInDropPositiveDoNot) {
  const auto o = find_object(default_catalog(), "ink");
  const auto neg = scripted_expert_episode(o, Scenario::stab_neg, 3);
  EXPECT_EQ(neg.frames.back().label, FrameLabel::dropped);
  const auto pos = scripted_expert_episode(o, Scenario::stab_pos, 3);
  for (const auto& f : pos.frames) EXPECT_NE(f.label, FrameLabel::dropped);
}

TEST(Expert, ImpossibleGraspIsGenerationError) {
  ObjectSpec heavy{"anvil", 5000.0, 50.0, 1.0, 0.1, 10.0};
  EXPECT_THROW(scripted_expert_episode(heavy, Scenario::gp, 1), GenerationError);
}

TEST(Expert, CorrectionMatchesProportionalRule) {
  const auto o = find_object(default_catalog(), "cup");
  EXPECT_EQ(expert_delta_theta(o, 0.0), 0.0);
  EXPECT_EQ(expert_delta_theta(o, -1.0), 0.0);
  // Capacity gained per degree is 2 mu k (80 / 90).
  const double per_deg = 2.0 * o.mu * o.stiffness_n_per_mm * 80.0 / 90.0;
  const double small = 0.1 * per_deg;
  EXPECT_NEAR(expert_delta_theta(o, small), 1.2 * 0.1, 1e-12);
  EXPECT_EQ(expert_delta_theta(o, 100.0 * per_deg), 5.0);
}

TEST(Expert, InitialGraspReachesMargin) {
  const auto o = find_object(default_catalog(), "milk_bottle");
  const auto rec = scripted_expert_episode(o, Scenario::gp, 1);
  const double fn = normal_force(o, rec.frames.back().theta_deg);
  EXPECT_GE(2.0 * o.mu * fn, 1.5 * object_weight_n(o, 0.0));
}

TEST(Dataset, RejectsSignFlipDroppedFrameAndWrongDimension) {
  const auto rec = quantized_record(100);

  auto flipped = rec;
  std::size_t k = 1;
  while (k < flipped.frames.size() && flipped.frames[k].dS[0] == 0.0) ++k;
  ASSERT_LT(k, flipped.frames.size());
  flipped.frames[k].dS[0] = -flipped.frames[k].dS[0];
  EXPECT_FALSE(validate_record(flipped).empty());

  auto lines = lines_of(format_dataset(rec));
  auto dropped = lines;
  dropped.erase(dropped.begin() + 50);  // file line 51
  EXPECT_EQ(parse_error_line(join(dropped)), 51u);

  auto wide = lines;
  wide[20] += "\t0";
  EXPECT_EQ(parse_error_line(join(wide)), 21u);
}
