#include <gtest/gtest.h>

#include <fstream>

#include "recloss/checkpoint.hpp"
#include "test_support.hpp"

using namespace recloss;

TEST(Checkpoint, ModelRoundTripAtSinglePrecision) {
  recloss::testing::TempDir dir;
  const auto m = init_model(5, 7, 3, 1, 0.3, ScoreMode::cosine, 0.4);
  write_checkpoint(dir.path() / "model.bin", to_checkpoint(m));
  const auto back = to_model(read_checkpoint(dir.path() / "model.bin"));
  EXPECT_EQ(back.mode, ScoreMode::cosine);
  EXPECT_NEAR(back.temperature, 0.4, 1e-7);
  ASSERT_EQ(back.user_embeddings.rows(), 5);
  ASSERT_EQ(back.item_embeddings.cols(), 3);
  EXPECT_LT((back.user_embeddings - m.user_embeddings).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_LT((back.item_embeddings - m.item_embeddings).cwiseAbs().maxCoeff(), 1e-7);
  // layout is row-major: the first stored value is user 0, dimension 0
  std::ifstream in(dir.path() / "model.bin", std::ios::binary);
  in.seekg(8 + 4 + 4 + 8 + 8 + 4 + 4);
  float first = 0;
  in.read(reinterpret_cast<char*>(&first), 4);
  EXPECT_EQ(first, static_cast<float>(m.user_embeddings(0, 0)));
  EXPECT_EQ(first, static_cast<float>(back.user_embeddings(0, 0)));
}

TEST(Checkpoint, EaseWeightsRoundTrip) {
  recloss::testing::TempDir dir;
  Eigen::MatrixXd w(3, 3);
  w << 0, 0.5, -1, 2, 0, 0.25, 1, 3, 0;
  write_checkpoint(dir.path() / "ease.bin", ease_checkpoint(w));
  const auto ck = read_checkpoint(dir.path() / "ease.bin");
  EXPECT_EQ(ck.mode, CheckpointMode::ease);
  EXPECT_EQ(ck.users.rows(), 0);
  EXPECT_EQ(Eigen::MatrixXd(ck.items), w);
}

TEST(Checkpoint, RejectsForeignAndTruncatedFiles) {
  recloss::testing::TempDir dir;
  recloss::testing::write_text(dir.path() / "junk.bin", "NOTACHECKPOINT-------------------");
  EXPECT_THROW(read_checkpoint(dir.path() / "junk.bin"), std::runtime_error);
  write_checkpoint(dir.path() / "ok.bin", to_checkpoint(init_model(2, 2, 2, 1, 0.1)));
  std::ifstream in(dir.path() / "ok.bin", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  recloss::testing::write_text(dir.path() / "cut.bin", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_checkpoint(dir.path() / "cut.bin"), std::runtime_error);
  EXPECT_THROW(read_checkpoint(dir.path() / "missing.bin"), std::runtime_error);
}
