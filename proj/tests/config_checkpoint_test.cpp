// Copyright 2026 The SPI-GAN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "gtest/gtest.h"
#include "spigan/checkpoint.hpp"
#include "spigan/config.hpp"
#include "spigan/error.hpp"
#include "spigan/training.hpp"

namespace spigan {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("spigan_ckpt_test_" + name)).string();
}

TEST(Config, EmptyTextGivesDefaults) {
  const TrainConfig cfg = parse_config_text("");
  EXPECT_EQ(cfg.lr_g, 0.0025);
  EXPECT_EQ(cfg.lr_d, 0.0025);
  EXPECT_EQ(cfg.ema_decay, 0.999);
  EXPECT_EQ(cfg.lambda_r1, 0.01);
  EXPECT_EQ(cfg.lambda_path, 0.0);
  EXPECT_EQ(cfg.lazy_g, 4);
  EXPECT_EQ(cfg.lazy_d, 16);
  EXPECT_EQ(cfg.adam_beta1, 0.0);
  EXPECT_EQ(cfg.adam_beta2, 0.99);
  EXPECT_TRUE(std::holds_alternative<RandomU>(cfg.u_mode));
  EXPECT_EQ(cfg.model.solver.kind, SolverKind::kRk4);
  EXPECT_EQ(cfg.model.solver.steps, 8);
}

TEST(Config, FixedUAblation) {
  const TrainConfig cfg = parse_config_text("# ablation\nu_mode = fixed:0.5\n");
  ASSERT_TRUE(std::holds_alternative<FixedU>(cfg.u_mode));
  EXPECT_EQ(std::get<FixedU>(cfg.u_mode).value, 0.5);
}

TEST(Config, CommentsAndWhitespace) {
  const TrainConfig cfg = parse_config_text("  lr_g=0.001   # faster\n\n\tbatch = 64\nsolver = euler\nmapping_kind = mlp\n");
  EXPECT_EQ(cfg.lr_g, 0.001);
  EXPECT_EQ(cfg.batch, 64u);
  EXPECT_EQ(cfg.model.solver.kind, SolverKind::kEuler);
  EXPECT_EQ(cfg.mapping_kind, MappingKind::kMlp);
}

void expect_config_error(const std::string& text, const std::string& key, std::size_t line) {
  try {
    parse_config_text(text);
    FAIL() << "accepted: " << text;
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), key) << text;
    EXPECT_EQ(e.line(), line) << text;
  }
}

TEST(Config, ErrorsNameKeyAndLine) {
  expect_config_error("lr_g = -1\n", "lr_g", 1);
  expect_config_error("batch = 8\nwarmup = 3\n", "warmup", 2);
  expect_config_error("\n\nema_decay = abc\n", "ema_decay", 3);
  expect_config_error("u_mode = fixed:0\n", "u_mode", 1);
  expect_config_error("u_mode = sometimes\n", "u_mode", 1);
  expect_config_error("time_dim = 7\n", "time_dim", 1);
  expect_config_error("lazy_d = 0\n", "lazy_d", 1);
  expect_config_error("batch = -4\n", "batch", 1);
  expect_config_error("lr_d\n", "lr_d", 1);
}

TEST(Config, TextRoundTrip) {
  const TrainConfig cfg = parse_config_text("lr_g = 0.0013\nu_mode = fixed:0.25\nseed = 42\nhidden_dim = 12\n");
  const TrainConfig back = parse_config_text(to_config_text(cfg));
  EXPECT_EQ(to_config_text(back), to_config_text(cfg));
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.model.hidden_dim, 12u);
}

TEST(Config, MissingFileIsAnIoError) { EXPECT_THROW(parse_config(temp_path("none.cfg")), IoError); }

TrainConfig small_config() {
  TrainConfig cfg = parse_config_text(
      "batch = 32\ndataset_size = 256\nseed = 11\nhidden_dim = 8\ngen_width = 16\ngen_blocks = 2\n"
      "disc_width = 16\ntime_dim = 8\nsolver_steps = 2\nlazy_g = 2\nlazy_d = 3\n");
  return cfg;
}

ModelState trained(std::int64_t iters) {
  const TrainConfig cfg = small_config();
  const Dataset data = load_training_data(cfg);
  Trainer t(cfg, data);
  t.run(iters);
  return t.snapshot();
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const ModelState s = trained(20);
  const std::vector<std::uint8_t> a = encode_checkpoint(s);
  const std::vector<std::uint8_t> b = encode_checkpoint(decode_checkpoint(a));
  EXPECT_EQ(a, b);
  const std::string path = temp_path("rt.ckpt");
  save_checkpoint(s, path);
  EXPECT_EQ(encode_checkpoint(load_checkpoint(path)), a);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RestoresEveryArrayAndCounter) {
  ModelState s = trained(21);
  ModelState r = decode_checkpoint(encode_checkpoint(s));
  EXPECT_EQ(r.iter, 21);
  EXPECT_EQ(r.d_updates, s.d_updates);
  EXPECT_EQ(r.g_updates, s.g_updates);
  EXPECT_EQ(r.adam_g.steps(), s.adam_g.steps());
  EXPECT_EQ(r.path_len_mean, s.path_len_mean);
  EXPECT_EQ(r.data_epoch, s.data_epoch);
  EXPECT_EQ(r.data_cursor, s.data_cursor);
  EXPECT_EQ(r.norm.shift, s.norm.shift);
  EXPECT_EQ(r.norm.scale, s.norm.scale);
  EXPECT_EQ(checksum(r.generator_side()), checksum(s.generator_side()));
  EXPECT_EQ(checksum(r.discriminator.named_parameters()), checksum(s.discriminator.named_parameters()));
  EXPECT_EQ(checksum(r.ema_side()), checksum(s.ema_side()));
  for (std::size_t i = 0; i < s.adam_d.size(); ++i) {
    EXPECT_EQ(r.adam_d.first_moment(i), s.adam_d.first_moment(i));
    EXPECT_EQ(r.adam_d.second_moment(i), s.adam_d.second_moment(i));
  }
  EXPECT_EQ(r.rng.normal(), s.rng.normal());
}

TEST(Checkpoint, ResumeMatchesStraightRun) {
  const TrainConfig cfg = small_config();
  const Dataset data = load_training_data(cfg);
  const std::int64_t k = 37;
  Trainer straight(cfg, data);
  straight.run(k + 100);
  Trainer first(cfg, data);
  first.run(k);
  Trainer resumed(decode_checkpoint(encode_checkpoint(first.snapshot())), data);
  resumed.run(k + 100);
  EXPECT_EQ(encode_checkpoint(resumed.snapshot()), encode_checkpoint(straight.snapshot()));
}

TEST(Checkpoint, CorruptByteFailsCrc) {
  std::vector<std::uint8_t> bytes = encode_checkpoint(trained(4));
  bytes[bytes.size() / 2] ^= 0x40;
  try {
    decode_checkpoint(bytes);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("CRC"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, TruncationAndMagicAreRejected) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(trained(2));
  for (std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{19}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(decode_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + n)), CheckpointError) << n;
  }
  std::vector<std::uint8_t> magic = bytes;
  magic[0] = 'X';
  try {
    decode_checkpoint(magic);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
  std::vector<std::uint8_t> extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_checkpoint(extra), CheckpointError);
}

TEST(Checkpoint, OtherVersionIsRejected) {
  std::vector<std::uint8_t> bytes = encode_checkpoint(trained(2));
  bytes[4] = static_cast<std::uint8_t>(kCheckpointVersion + 1);
  // Re-seal so only the version differs.
  const std::uint32_t crc = crc32_of(bytes.data(), bytes.size() - 4);
  std::memcpy(bytes.data() + bytes.size() - 4, &crc, 4);
  try {
    decode_checkpoint(bytes);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoint, MissingFileIsAnIoError) { EXPECT_THROW(load_checkpoint(temp_path("absent.ckpt")), IoError); }

TEST(Checkpoint, Crc32MatchesReferenceValue) {
  const std::string s = "123456789";
  EXPECT_EQ(crc32_of(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()), 0xCBF43926u);
}

}  // namespace
}  // namespace spigan
