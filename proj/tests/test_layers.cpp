#include "fdnet/gradcheck.hpp"
#include "fdnet/layers.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace fdnet;
using namespace fdnet::testing;

namespace {

Scalar channel_norm(const Tensor& w, Index c) {
  const Index per = w.size() / w.dim(0);
  return w.data().segment(c * per, per).matrix().norm();
}

/// Attention written out row by row for one [L, d] sequence.
RowMatrix reference_attention(const RowMatrix& x, const AttentionParams& p) {
  auto mat = [](const Tensor& t) { return RowMatrix(ConstMatrixMap(t.ptr(), t.dim(0), t.dim(1))); };
  const Index L = x.rows(), d = x.cols(), h = p.heads, dh = d / h;
  const RowMatrix q = x * mat(p.query), k = x * mat(p.key), v = x * mat(p.value);
  RowMatrix ctx = RowMatrix::Zero(L, d);
  for (Index head = 0; head < h; ++head) {
    for (Index i = 0; i < L; ++i) {
      std::vector<Scalar> s(static_cast<std::size_t>(L));
      Scalar mx = -INFINITY;
      for (Index j = 0; j < L; ++j) {
        Scalar dot = 0;
        for (Index c = 0; c < dh; ++c) dot += q(i, head * dh + c) * k(j, head * dh + c);
        s[j] = dot / std::sqrt(static_cast<Scalar>(dh));
        mx = std::max(mx, s[j]);
      }
      Scalar z = 0;
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (Index j = 0; j < L; ++j)
        for (Index c = 0; c < dh; ++c) ctx(i, head * dh + c) += s[j] / z * v(j, head * dh + c);
    }
  }
  return ctx * mat(p.output);
}

}  // namespace

TEST(WeightNorm, EffectiveWeight) {
  WeightNormConv layer = make_wn_conv(3, 4, 3, 1, 1, 1, "wn");
  for (Index c = 0; c < 4; ++c) EXPECT_NEAR(layer.magnitude[c], channel_norm(layer.direction, c), 1e-15);
  EXPECT_LT(max_abs_diff(wn_effective_weight(layer), layer.direction), 1e-15);

  Tensor unit = layer.direction;
  for (Index c = 0; c < 4; ++c) {
    const Scalar n = channel_norm(unit, c);
    for (Index i = 0; i < 9; ++i) unit[c * 9 + i] /= n;
  }
  WeightNormConv u = layer;
  u.direction = unit;
  u.magnitude = Tensor({4}, {0.5, 2.0, -1.0, 3.0});
  Tensor expected = unit;
  for (Index c = 0; c < 4; ++c)
    for (Index i = 0; i < 9; ++i) expected[c * 9 + i] *= u.magnitude[c];
  EXPECT_LT(max_abs_diff(wn_effective_weight(u), expected), 1e-15);

  WeightNormConv r = layer;
  r.direction = random_tensor({4, 3, 3, 1}, 2);
  r.magnitude = random_tensor({4}, 3);
  const Tensor w = wn_effective_weight(r);
  for (Index c = 0; c < 4; ++c) EXPECT_NEAR(channel_norm(w, c), std::abs(r.magnitude[c]), 1e-12);
}

TEST(WeightNorm, ZeroChannelIsDegenerate) {
  WeightNormConv layer = make_wn_conv(2, 2, 1, 1, 0, 1, "wn");
  for (Index i = 0; i < 2; ++i) layer.direction[2 + i] = 0.0;
  EXPECT_FDNET_ERROR(wn_effective_weight(layer), Errc::degenerate_weight);
  Graph g;
  EXPECT_FDNET_ERROR(wn_conv_forward(g, layer, g.constant(Tensor({1, 2, 3, 1}))), Errc::degenerate_weight);
}

TEST(WeightNorm, ConvMatchesPrecomputedWeightBitwise) {
  WeightNormConv layer = make_wn_conv(3, 5, 3, 2, 1, 4, "wn");
  layer.magnitude = random_tensor({5}, 5);
  layer.bias = random_tensor({5}, 6);
  const Tensor x = random_tensor({2, 3, 9, 3}, 7);
  Graph g;
  const Tensor a = wn_conv_forward(g, layer, g.constant(x)).value();
  const Tensor b =
      conv2d_time(g.constant(x), g.constant(wn_effective_weight(layer)), g.constant(layer.bias), 2, 1).value();
  EXPECT_EQ(a, b);
}

TEST(WeightNorm, DirectionScaleInvariance) {
  WeightNormConv layer = make_wn_conv(3, 4, 3, 1, 1, 8, "wn");
  layer.magnitude = random_tensor({4}, 9);
  const Tensor x = random_tensor({1, 3, 7, 2}, 10);
  WeightNormConv scaled = layer;
  scaled.direction.data() *= 10.0;
  Graph g;
  const Tensor a = wn_conv_forward(g, layer, g.constant(x)).value();
  const Tensor b = wn_conv_forward(g, scaled, g.constant(x)).value();
  EXPECT_LT(max_abs_diff(a, b) / a.data().abs().maxCoeff(), 1e-12);
}

TEST(WeightNorm, GradCheckThroughReparameterization) {
  WeightNormConv layer = make_wn_conv(2, 3, 3, 1, 1, 11, "wn");
  layer.magnitude = random_tensor({3}, 12);
  layer.bias = random_tensor({3}, 13);
  const Tensor x = random_tensor({1, 2, 6, 2}, 14);
  const Tensor proj = random_tensor({1, 3, 6, 2}, 15);
  Tensor* targets[] = {&layer.direction, &layer.magnitude, &layer.bias};
  const Scalar err = grad_check_bound(
      [&](Graph& g) { return sum(mul(wn_conv_forward(g, layer, g.constant(x)), g.constant(proj))); }, targets);
  EXPECT_LT(err, 1e-3);
}

TEST(ValueEmbedding, ShapesAndAffineMap) {
  ValueEmbedding emb = make_value_embedding(8, 1, "emb");
  Graph g;
  EXPECT_EQ(value_embedding(g, emb, g.constant(Tensor({4, 1, 672, 7}))).shape(), (Shape{4, 8, 672, 7}));
  EXPECT_FDNET_ERROR(value_embedding(g, emb, g.constant(Tensor({4, 2, 5, 7}))), Errc::invalid_shape);

  ValueEmbedding zero{Tensor({3, 1, 1, 1}, 0.0), Tensor({3}, {1.5, -2.0, 0.25})};
  const Tensor y = value_embedding(g, zero, g.constant(random_tensor({2, 1, 5, 3}, 2))).value();
  for (Index b = 0; b < 2; ++b)
    for (Index d = 0; d < 3; ++d)
      for (Index t = 0; t < 5; ++t)
        for (Index v = 0; v < 3; ++v) EXPECT_EQ(y.at({b, d, t, v}), zero.bias[d]);
}

TEST(ValueEmbedding, PointwiseLocality) {
  ValueEmbedding emb = make_value_embedding(4, 3, "emb");
  emb.bias = random_tensor({4}, 4);
  const Tensor x = random_tensor({1, 1, 6, 3}, 5);
  Tensor xp = x;
  xp.at({0, 0, 2, 1}) += 1.0;
  Graph g;
  const Tensor a = value_embedding(g, emb, g.constant(x)).value();
  const Tensor b = value_embedding(g, emb, g.constant(xp)).value();
  for (Index d = 0; d < 4; ++d)
    for (Index t = 0; t < 6; ++t)
      for (Index v = 0; v < 3; ++v) {
        if (t == 2 && v == 1) {
          EXPECT_NE(a.at({0, d, t, v}), b.at({0, d, t, v}));
        } else {
          EXPECT_EQ(a.at({0, d, t, v}), b.at({0, d, t, v}));
        }
      }
}

TEST(LinearHead, IdentityAndHandProduct) {
  LinearHead id{Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor({3}, 0.0)};
  const Tensor x = random_tensor({2, 3, 4}, 6);
  Graph g;
  EXPECT_EQ(linear_head_forward(g, id, g.constant(x)).value(), x);

  LinearHead h{Tensor({2, 3}, {1, 2, 3, 4, 5, 6}), Tensor({2}, {0.5, -1})};
  // Two variates: columns [1,0,2] and [-1,1,3].
  const Tensor f({1, 3, 2}, {1, -1, 0, 1, 2, 3});
  EXPECT_EQ(linear_head_forward(g, h, g.constant(f)).value(), Tensor({1, 2, 2}, {7.5, 10.5, 15.0, 18.0}));
  EXPECT_FDNET_ERROR(linear_head_forward(g, h, g.constant(Tensor({1, 4, 2}))), Errc::invalid_shape);
}

TEST(LinearHead, VariatePermutationEquivariance) {
  LinearHead h = make_linear_head(6, 4, 7, "head");
  h.bias = random_tensor({4}, 8);
  const Tensor x = random_tensor({2, 6, 3}, 9);
  const Index perm[] = {2, 0, 1};
  Tensor xp({2, 6, 3});
  for (Index b = 0; b < 2; ++b)
    for (Index i = 0; i < 6; ++i)
      for (Index v = 0; v < 3; ++v) xp.at({b, i, v}) = x.at({b, i, perm[v]});
  Graph g;
  const Tensor y = linear_head_forward(g, h, g.constant(x)).value();
  const Tensor yp = linear_head_forward(g, h, g.constant(xp)).value();
  for (Index b = 0; b < 2; ++b)
    for (Index o = 0; o < 4; ++o)
      for (Index v = 0; v < 3; ++v) EXPECT_EQ(yp.at({b, o, v}), y.at({b, o, perm[v]}));
}

TEST(Attention, SingleKeyIsValueThenOutput) {
  AttentionParams p = make_attention(4, 1, 1, "att");
  const Tensor x = random_tensor({3, 1, 4}, 2);
  Graph g;
  const Tensor y = attention_forward(g, p, g.constant(x)).value();
  const Tensor ref = matmul(matmul(g.constant(x), g.constant(p.value)), g.constant(p.output)).value();
  EXPECT_LT(max_abs_diff(y, ref), 1e-14);
}

TEST(Attention, ZeroQueryGivesUniformWeights) {
  AttentionParams p = make_attention(4, 2, 3, "att");
  p.query = Tensor({4, 4}, 0.0);
  const Tensor x = random_tensor({1, 5, 4}, 4);
  Graph g;
  const Tensor y = attention_forward(g, p, g.constant(x)).value();
  const Tensor v = matmul(g.constant(x), g.constant(p.value)).value();
  Tensor mean_row({1, 1, 4});
  for (Index t = 0; t < 5; ++t)
    for (Index c = 0; c < 4; ++c) mean_row[c] += v.at({0, t, c}) / 5.0;
  const Tensor expected_row = matmul(g.constant(mean_row), g.constant(p.output)).value();
  for (Index t = 0; t < 5; ++t)
    for (Index c = 0; c < 4; ++c) EXPECT_NEAR(y.at({0, t, c}), expected_row[c], 1e-14);
}

TEST(Attention, IdenticalRowsGiveIdenticalOutputs) {
  AttentionParams p = make_attention(4, 1, 5, "att");
  Tensor x({1, 6, 4});
  const Tensor row = random_tensor({4}, 6);
  for (Index t = 0; t < 6; ++t)
    for (Index c = 0; c < 4; ++c) x.at({0, t, c}) = row[c];
  Graph g;
  const Tensor y = attention_forward(g, p, g.constant(x)).value();
  for (Index t = 1; t < 6; ++t)
    for (Index c = 0; c < 4; ++c) EXPECT_EQ(y.at({0, t, c}), y.at({0, 0, c}));
}

TEST(Attention, MatchesRowByRowReference) {
  for (Index heads : {1, 2, 4}) {
    AttentionParams p = make_attention(4, heads, 7, "att");
    const Tensor x = random_tensor({2, 5, 4}, 8);
    Graph g;
    const Tensor y = attention_forward(g, p, g.constant(x)).value();
    for (Index n = 0; n < 2; ++n) {
      const RowMatrix ref = reference_attention(RowMatrix(ConstMatrixMap(x.ptr() + n * 20, 5, 4)), p);
      for (Index t = 0; t < 5; ++t)
        for (Index c = 0; c < 4; ++c) EXPECT_NEAR(y.at({n, t, c}), ref(t, c), 1e-13) << "heads " << heads;
    }
  }
  EXPECT_FDNET_ERROR(make_attention(8, 3, 1, "bad"), Errc::invalid_parameter);
}

TEST(Attention, GradCheckThroughAllFourMatrices) {
  AttentionParams p = make_attention(4, 2, 9, "att");
  const Tensor x = random_tensor({2, 4, 5, 2}, 10);
  const Tensor proj = random_tensor({2, 4, 5, 2}, 11);
  Tensor* targets[] = {&p.query, &p.key, &p.value, &p.output};
  const Scalar err = grad_check_bound(
      [&](Graph& g) { return sum(mul(temporal_attention(g, p, g.constant(x)), g.constant(proj))); }, targets);
  EXPECT_LT(err, 1e-3);
}

TEST(Attention, TemporalAttentionIsPerVariate) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    AttentionParams p = make_attention(4, 1, seed, "att");
    const Tensor x = random_tensor({2, 4, 6, 3}, seed + 50);
    Tensor z = x;
    for (Index b = 0; b < 2; ++b)
      for (Index d = 0; d < 4; ++d)
        for (Index t = 0; t < 6; ++t) z.at({b, d, t, 1}) = 0.0;
    Graph g;
    const Tensor a = temporal_attention(g, p, g.constant(x)).value();
    const Tensor b = temporal_attention(g, p, g.constant(z)).value();
    for (Index i = 0; i < a.size(); ++i)
      if (i % 3 != 1) EXPECT_EQ(a[i], b[i]);
  }
}

TEST(Init, DeterministicPerNameAndSeed) {
  EXPECT_EQ(make_wn_conv(8, 8, 3, 1, 1, 4321, "x").direction, make_wn_conv(8, 8, 3, 1, 1, 4321, "x").direction);
  EXPECT_FALSE(make_wn_conv(8, 8, 3, 1, 1, 4321, "x").direction == make_wn_conv(8, 8, 3, 1, 1, 4322, "x").direction);
  EXPECT_FALSE(make_wn_conv(8, 8, 3, 1, 1, 4321, "x").direction == make_wn_conv(8, 8, 3, 1, 1, 4321, "y").direction);
  const WeightNormConv c = make_wn_conv(8, 8, 3, 1, 1, 1, "x");
  EXPECT_EQ(c.bias, Tensor({8}, 0.0));
  EXPECT_EQ(make_linear_head(10, 4, 1, "h").bias, Tensor({4}, 0.0));
}

TEST(Init, EmpiricalStdMatchesKaimingTarget) {
  const Index fan_in = 24;
  const Tensor w = kaiming_uniform({10000}, fan_in, 17, "sample");
  const Scalar mean = w.data().mean();
  const Scalar std = std::sqrt((w.data() - mean).square().mean());
  const Scalar target = kaiming_bound(fan_in) / std::sqrt(3.0);
  EXPECT_NEAR(std, target, 0.2 * target);
  EXPECT_LE(w.data().abs().maxCoeff(), kaiming_bound(fan_in));
}
