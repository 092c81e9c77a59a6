#include <gtest/gtest.h>

#include "mvbigan/config.hpp"

using namespace mvbigan;

TEST(Config, TextRoundTrip) {
  TrainConfig c = TrainConfig::for_task(TaskKind::Stream);
  c.lr = 3.3e-5;
  c.lambda = 0.1 + 0.2;
  c.encoder_hidden = {7, 9};
  c.update_mode = UpdateMode::OnePass;
  c.out_dir = "runs/x";
  const TrainConfig d = config_from_text(config_to_text(c));
  EXPECT_EQ(config_to_text(d), config_to_text(c));
  EXPECT_EQ(d.lambda, c.lambda);
  EXPECT_EQ(d.encoder_hidden, c.encoder_hidden);
  EXPECT_EQ(d.task, TaskKind::Stream);
}

TEST(Config, ParsesCommentsAndOverrides) {
  TrainConfig c;
  apply_config(c, parse_config_text("# comment\ntrain.lr = 0.5\n\narch.d2_hidden = 3,4\n"));
  EXPECT_EQ(c.lr, 0.5);
  EXPECT_EQ(c.d2_hidden, (std::vector<int>{3, 4}));
}

TEST(Config, RejectsUnknownAndBadValues) {
  TrainConfig c;
  EXPECT_THROW(set_config_value(c, "train.nope", "1"), Error);
  EXPECT_THROW(set_config_value(c, "train.lr", "fast"), Error);
  EXPECT_THROW(get_config_value(c, "nope"), Error);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, EveryKeyReadsBack) {
  const TrainConfig c;
  TrainConfig d;
  for (const auto& k : config_keys()) set_config_value(d, k.key, get_config_value(c, k.key));
  EXPECT_EQ(config_to_text(c), config_to_text(d));
}
