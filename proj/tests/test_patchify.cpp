#include "flowkit/patchify.hpp"

#include "flowkit/rng.hpp"

#include <doctest.h>

using namespace flowkit;

TEST_CASE("token counts") {
  const PatchSpec p122{1, 2, 2};
  CHECK(token_count(32, 96, 96, p122) == 73728);  // 768 px, 256 frames after 8x compression
  CHECK(token_count(16, 24, 44, p122) == 4224);

  const PatchSpec identity{1, 1, 1};
  CHECK(token_count(5, 7, 9, identity) == 5 * 7 * 9);

  CHECK_THROWS(token_count(3, 96, 96, PatchSpec{2, 2, 2}));
  CHECK_THROWS(token_count(32, 95, 96, p122));
}

TEST_CASE("token count times kernel volume recovers the latent volume") {
  Rng rng(62);
  for (int trial = 0; trial < 50; ++trial) {
    const PatchSpec spec{1 + static_cast<Index>(rng.uniform_index(3)), 1 + static_cast<Index>(rng.uniform_index(3)),
                         1 + static_cast<Index>(rng.uniform_index(3))};
    const Index t = spec.k_t * (1 + static_cast<Index>(rng.uniform_index(6)));
    const Index h = spec.k_h * (1 + static_cast<Index>(rng.uniform_index(6)));
    const Index w = spec.k_w * (1 + static_cast<Index>(rng.uniform_index(6)));
    CHECK(token_count(t, h, w, spec) * spec.k_t * spec.k_h * spec.k_w == t * h * w);
  }
}

TEST_CASE("patchify lays out a 2x2 block as one token") {
  Tensor x(Shape{1, 1, 2, 2});
  x.at({0, 0, 0, 0}) = 1.0;
  x.at({0, 0, 0, 1}) = 2.0;
  x.at({0, 0, 1, 0}) = 3.0;
  x.at({0, 0, 1, 1}) = 4.0;
  const Tensor tokens = patchify(x, PatchSpec{1, 2, 2});
  CHECK(tokens.shape() == Shape{1, 4});
  CHECK(tokens[0] == 1.0);
  CHECK(tokens[1] == 2.0);
  CHECK(tokens[2] == 3.0);
  CHECK(tokens[3] == 4.0);
}

TEST_CASE("identity kernel flattens and round trips") {
  Rng rng(63);
  const Tensor x = sample_standard_normal(rng, Shape{2, 3, 2, 2});
  const PatchSpec spec{1, 1, 1};
  const Tensor tokens = patchify(x, spec);
  CHECK(tokens.shape() == Shape{2 * 2 * 2, 3});
  CHECK(exact_equal(unpatchify(tokens, 2, 3, 2, 2, spec), x));
}

TEST_CASE("patchify is a bijection for random specs") {
  Rng rng(64);
  for (int trial = 0; trial < 25; ++trial) {
    const PatchSpec spec{1 + static_cast<Index>(rng.uniform_index(3)), 1 + static_cast<Index>(rng.uniform_index(3)),
                         1 + static_cast<Index>(rng.uniform_index(3))};
    const Index t = spec.k_t * (1 + static_cast<Index>(rng.uniform_index(4)));
    const Index c = 1 + static_cast<Index>(rng.uniform_index(4));
    const Index h = spec.k_h * (1 + static_cast<Index>(rng.uniform_index(4)));
    const Index w = spec.k_w * (1 + static_cast<Index>(rng.uniform_index(4)));
    Rng data_rng = rng.split(static_cast<std::uint64_t>(trial));
    const Tensor x = sample_standard_normal(data_rng, Shape{t, c, h, w});
    CHECK(exact_equal(unpatchify(patchify(x, spec), t, c, h, w, spec), x));
  }
}

TEST_CASE("positional embeddings add the three factors") {
  PosEmbedSpec spec;
  spec.t_max = 4;
  spec.h_max = 3;
  spec.w_max = 5;
  spec.dim = 6;

  SUBCASE("all-zero tables give the zero vector") {
    spec.phi_t = Eigen::MatrixXd::Zero(4, 6);
    spec.phi_h = Eigen::MatrixXd::Zero(3, 6);
    spec.phi_w = Eigen::MatrixXd::Zero(5, 6);
    CHECK(pos_embed(1, 2, 3, spec).isZero());
  }

  SUBCASE("one-hot tables sum to three ones") {
    spec.phi_t = Eigen::MatrixXd::Zero(4, 6);
    spec.phi_h = Eigen::MatrixXd::Zero(3, 6);
    spec.phi_w = Eigen::MatrixXd::Zero(5, 6);
    spec.phi_t(1, 0) = 1.0;
    spec.phi_h(2, 1) = 1.0;
    spec.phi_w(3, 2) = 1.0;
    const Eigen::VectorXd e = pos_embed(1, 2, 3, spec);
    CHECK(e.sum() == 3.0);
    CHECK(e[0] == 1.0);
    CHECK(e[1] == 1.0);
    CHECK(e[2] == 1.0);
  }

  SUBCASE("temporal differences are independent of the spatial index") {
    Rng rng(65);
    auto randm = [&rng](Index rows, Index cols) {
      Eigen::MatrixXd m(rows, cols);
      for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
      }
      return m;
    };
    spec.phi_t = randm(4, 6);
    spec.phi_h = randm(3, 6);
    spec.phi_w = randm(5, 6);
    const Eigen::VectorXd d1 = pos_embed(3, 0, 0, spec) - pos_embed(1, 0, 0, spec);
    const Eigen::VectorXd d2 = pos_embed(3, 2, 4, spec) - pos_embed(1, 2, 4, spec);
    CHECK((d1 - d2).lpNorm<Eigen::Infinity>() <= 1e-12);
  }

  SUBCASE("out-of-range indices throw") {
    spec.phi_t = Eigen::MatrixXd::Zero(4, 6);
    spec.phi_h = Eigen::MatrixXd::Zero(3, 6);
    spec.phi_w = Eigen::MatrixXd::Zero(5, 6);
    CHECK_THROWS(pos_embed(4, 0, 0, spec));
    CHECK_THROWS(pos_embed(0, 3, 0, spec));
    CHECK_THROWS(pos_embed(0, 0, 5, spec));
  }
}
