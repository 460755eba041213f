#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace geoproto;

namespace {

std::string message_of(std::string_view text) {
  try {
    parse_fit_config(text, "cfg");
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
    return e.what();
  }
  ADD_FAILURE() << "expected InvalidConfig for: " << text;
  return {};
}

}  // namespace

TEST(FitConfig, Defaults) {
  const FitConfig c;
  EXPECT_EQ(c.graph.k, 20);
  EXPECT_TRUE(c.graph.local_scaling);
  EXPECT_EQ(c.diffusion.t, 4);
  EXPECT_EQ(c.diffusion.L, 32);
  EXPECT_EQ(c.diffusion.normalization, Normalization::zca);
  EXPECT_EQ(c.landmarks.selection, LandmarkSelection::kmeans);
  EXPECT_EQ(c.landmarks.pool, LandmarkPool::per_class);
  EXPECT_EQ(c.landmarks.count, 768);
  EXPECT_EQ(c.landmarks.update_every, 20);
  EXPECT_EQ(c.prototypes.m, 10);
  EXPECT_EQ(c.nystrom_mode, NystromMode::row);
  EXPECT_EQ(parse_fit_config("", "cfg"), c);
}

TEST(FitConfig, SectionsDottedAndBareKeys) {
  const auto c = parse_fit_config(
      "# comment\nm = 3\nseed = 42\nnystrom_mode = paper\n[graph]\nk = 7\nlocal_scaling = off\n"
      "[diffusion]\nt = 8\nnormalization = energy\nlandmarks.count = 64\n",
      "cfg");
  EXPECT_EQ(c.graph.k, 7);
  EXPECT_FALSE(c.graph.local_scaling);
  EXPECT_EQ(c.diffusion.t, 8);
  EXPECT_EQ(c.diffusion.normalization, Normalization::energy);
  EXPECT_EQ(c.landmarks.count, 64);
  EXPECT_EQ(c.prototypes.m, 3);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.nystrom_mode, NystromMode::paper);
}

TEST(FitConfig, NonIntegerTIsRejected) {
  EXPECT_NE(message_of("t = 2.5\n").find("t must be a positive integer"), std::string::npos);
  EXPECT_NE(message_of("[diffusion]\nt = 0\n").find("t must be a positive integer"), std::string::npos);
}

TEST(FitConfig, UnknownAndMalformedKeys) {
  EXPECT_NE(message_of("graph.kk = 3\n").find("unknown config key 'graph.kk'"), std::string::npos);
  EXPECT_NE(message_of("bogus = 1\n").find("unknown"), std::string::npos);
  message_of("graph.k = -1\n");
  message_of("graph.local_scaling = maybe\n");
  message_of("diffusion.normalization = whiten\n");
  message_of("prototypes.epsilon_sim = 1.5\n");
  message_of("graph.epsilon_sigma = 0\n");
  message_of("just text\n");
}

TEST(FitConfig, SerializeRoundTrip) {
  FitConfig c;
  c.graph.k = 9;
  c.graph.epsilon_sigma = 3.3e-13;
  c.diffusion.zca_epsilon = 0.1 + 0.2;
  c.landmarks.pool = LandmarkPool::global;
  c.landmarks.seed = 18446744073709551615ull;
  c.prototypes.head_trainable = true;
  c.training.epochs = 12;
  c.training.step_size = 1.0 / 3.0;
  const auto text = serialize(c);
  const auto back = parse_fit_config(text, "cfg");
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.diffusion.zca_epsilon, c.diffusion.zca_epsilon);
  EXPECT_EQ(back.training.step_size, c.training.step_size);
  EXPECT_EQ(serialize(back), text);
}
