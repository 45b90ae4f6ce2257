#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdsf/nn.hpp"
#include "sdsf/tensor.hpp"

using namespace sdsf;

namespace {
Tensor rand_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.value_mut()) v = rng.uniform(lo, hi);
  return t;
}
}  // namespace

TEST_CASE("matmul identity times vector") {
  Tensor id = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor v = Tensor::from_data({3}, {1, 2, 3});
  Tensor r = matmul(id, v);
  REQUIRE(r.shape() == Shape{3});
  CHECK(r.at(0) == doctest::Approx(1.0));
  CHECK(r.at(1) == doctest::Approx(2.0));
  CHECK(r.at(2) == doctest::Approx(3.0));
}

TEST_CASE("sum of zeros is zero") {
  CHECK(sum(Tensor::zeros({4, 4})).item() == 0.0);
}

TEST_CASE("conv2d ones with 1x1 kernel of 2") {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor w = Tensor::full({1, 1, 1, 1}, 2.0);
  Tensor y = conv2d(x, w, Tensor(), 1, 0);
  REQUIRE(y.shape() == Shape({1, 1, 3, 3}));
  for (std::size_t i = 0; i < 9; ++i) CHECK(y.at(i) == doctest::Approx(2.0));
}

TEST_CASE("square grad is 2x") {
  Graph::active().clear();
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = mul(x, x);
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("sum grad is ones") {
  Graph::active().clear();
  Tensor x = Tensor::from_data({2, 3}, {1, -2, 3, 0.5, 0, 7}, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("sigmoid grad at zero") {
  Graph::active().clear();
  Tensor x = Tensor::scalar(0.0, true);
  backward(sigmoid(x));
  CHECK(x.grad()[0] == doctest::Approx(0.25));
}

TEST_CASE("fan-out accumulates") {
  Graph::active().clear();
  Tensor x = Tensor::scalar(2.0, true);
  Tensor y = add(mul(x, x), mul(x, x));
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("backward twice doubles leaf grads") {
  Graph::active().clear();
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = mul(x, x);
  backward(y);
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("non-scalar backward root rejected") {
  Graph::active().clear();
  Tensor x = Tensor::zeros({2}, true);
  Tensor y = add(x, 1.0);
  CHECK_THROWS(backward(y));
}

TEST_CASE("shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4});
  try {
    add(a, b);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4]") != std::string::npos);
  }
}

TEST_CASE("domain errors") {
  CHECK_THROWS_AS((void)tlog(Tensor::scalar(-1.0)), std::domain_error);
  CHECK_THROWS_AS((void)tsqrt(Tensor::scalar(-0.5)), std::domain_error);
}

TEST_CASE("suffix broadcasting") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from_data({3}, {10, 20, 30});
  Tensor r = add(a, b);
  CHECK(r.at(0) == 11.0);
  CHECK(r.at(4) == 25.0);

  Graph::active().clear();
  Tensor bg = Tensor::from_data({3}, {10, 20, 30}, true);
  Tensor ag = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  backward(sum(mul(ag, bg)));
  CHECK(bg.grad()[0] == doctest::Approx(5.0));
  CHECK(bg.grad()[2] == doctest::Approx(9.0));
  CHECK(ag.grad()[0] == doctest::Approx(10.0));
  CHECK(ag.grad()[5] == doctest::Approx(30.0));
}

TEST_CASE("leading 1-dims broadcast as plain elementwise") {
  Tensor a = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 2}, {10, 20, 30, 40});
  Tensor r = mul(a, b);
  CHECK(r.rank() == 3);
  CHECK(r.at(0) == 10.0);
  CHECK(r.at(3) == 160.0);
}

TEST_CASE("add_rows forward and grads") {
  Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor b = Tensor::from_data({2}, {10, 100}, true);
  Tensor y = add_rows(x, b);
  CHECK(y.at(0) == 11.0);
  CHECK(y.at(2) == 13.0);
  CHECK(y.at(3) == 104.0);
  backward(sum(mul(y, y)));
  CHECK(x.grad()[0] == doctest::Approx(22.0));
  CHECK(b.grad()[0] == doctest::Approx(2 * (11 + 12 + 13)));
  CHECK(b.grad()[1] == doctest::Approx(2 * (104 + 105 + 106)));

  CHECK_THROWS_AS((void)add_rows(x, Tensor::from_data({4}, {1, 2, 3, 4})),
                  std::invalid_argument);

  Graph::active().clear();
  Rng rng(41);
  Tensor xr = rand_tensor({3, 4}, rng);
  Tensor br = rand_tensor({3}, rng);
  auto res_x = grad_check(
      [&](const Tensor& t) { return sum(mul(add_rows(t, br.detach()), t)); }, xr, 1e-5, 1e-5);
  CHECK(res_x.ok());
  auto res_b = grad_check(
      [&](const Tensor& t) {
        Tensor y2 = add_rows(xr.detach(), t);
        return sum(mul(y2, y2));
      },
      br, 1e-5, 1e-5);
  CHECK(res_b.ok());
}

TEST_CASE("mul_rows scales blocks with grads to both sides") {
  Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor s = Tensor::from_data({2}, {2, -1}, true);
  Tensor y = mul_rows(x, s);
  CHECK(y.at(0) == 2.0);
  CHECK(y.at(2) == 6.0);
  CHECK(y.at(4) == -5.0);
  backward(sum(y));
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[5] == doctest::Approx(-1.0));
  CHECK(s.grad()[0] == doctest::Approx(6.0));
  CHECK(s.grad()[1] == doctest::Approx(15.0));

  Graph::active().clear();
  Rng rng(43);
  Tensor xr = rand_tensor({3, 4}, rng);
  Tensor sr = rand_tensor({3}, rng);
  auto res_x = grad_check(
      [&](const Tensor& t) {
        Tensor y2 = mul_rows(t, sr.detach());
        return sum(mul(y2, y2));
      },
      xr, 1e-5, 1e-5);
  CHECK(res_x.ok());
  auto res_s = grad_check(
      [&](const Tensor& t) {
        Tensor y2 = mul_rows(xr.detach(), t);
        return sum(mul(y2, y2));
      },
      sr, 1e-5, 1e-5);
  CHECK(res_s.ok());
}

TEST_CASE("take_rows gathers and scatter-adds") {
  Tensor table = Tensor::from_data({3, 2}, {0, 1, 10, 11, 20, 21}, true);
  Tensor y = take_rows(table, {2, 0, 2});
  CHECK(y.rank() == 2);
  CHECK(y.dim(0) == 3);
  CHECK(y.at(0) == 20.0);
  CHECK(y.at(2) == 0.0);
  CHECK(y.at(5) == 21.0);
  Tensor w = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
  backward(sum(mul(y, w)));
  CHECK(table.grad()[0] == doctest::Approx(3.0));
  CHECK(table.grad()[2] == doctest::Approx(0.0));
  CHECK(table.grad()[4] == doctest::Approx(6.0));  // rows 0 and 2 of w land on table row 2
  CHECK_THROWS_AS((void)take_rows(table, {3}), std::invalid_argument);
}

TEST_CASE("grad_check sum of squares") {
  Rng rng(7);
  Tensor x = rand_tensor({8}, rng);
  auto res = grad_check([](const Tensor& t) { return sum(mul(t, t)); }, x, 1e-5, 1e-6);
  CHECK(res.ok());
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("grad_check relu away from zero") {
  Rng rng(11);
  Tensor x = Tensor::zeros({16});
  for (auto& v : x.value_mut()) {
    v = rng.uniform(0.2, 2.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  }
  auto res = grad_check([](const Tensor& t) { return sum(relu(t)); }, x, 1e-5, 1e-5);
  CHECK(res.ok());
  CHECK(res.skipped_kinks == 0);
}

TEST_CASE("grad_check flags relu kink at exactly zero") {
  Tensor x = Tensor::from_data({3}, {1.0, 0.0, -1.0});
  auto res = grad_check([](const Tensor& t) { return sum(relu(t)); }, x, 1e-5, 1e-5);
  CHECK(res.skipped_kinks == 1);
  CHECK(res.checked == 2);
  CHECK(res.passed == 2);
}

TEST_CASE("grad_check per op") {
  Rng rng(23);

  auto check = [&](const char* name, std::function<Tensor(const Tensor&)> f, Tensor x,
                   double tol = 1e-5) {
    INFO(name);
    auto res = grad_check(f, x, 1e-5, tol);
    INFO("max_rel_err=" << res.max_rel_err << " checked=" << res.checked);
    CHECK(res.ok());
  };

  check("add", [](const Tensor& t) { return sum(add(t, t)); }, rand_tensor({4, 3}, rng));
  check("sub", [](const Tensor& t) { return sum(sub(t, mul(t, t))); }, rand_tensor({5}, rng));
  check("div", [](const Tensor& t) { return sum(div(1.0, t)); }, rand_tensor({6}, rng, 0.5, 2.0));
  check("exp", [](const Tensor& t) { return sum(texp(t)); }, rand_tensor({6}, rng, -1, 1));
  check("log", [](const Tensor& t) { return sum(tlog(t)); }, rand_tensor({6}, rng, 0.3, 3.0));
  check("sqrt", [](const Tensor& t) { return sum(tsqrt(t)); }, rand_tensor({6}, rng, 0.3, 3.0));
  check("pow", [](const Tensor& t) { return sum(tpow(t, 2.5)); }, rand_tensor({6}, rng, 0.2, 2.0));
  check("tanh", [](const Tensor& t) { return sum(ttanh(t)); }, rand_tensor({6}, rng));
  check("sin", [](const Tensor& t) { return sum(tsin(t)); }, rand_tensor({6}, rng));
  check("cos", [](const Tensor& t) { return sum(tcos(t)); }, rand_tensor({6}, rng));
  check("softplus", [](const Tensor& t) { return sum(softplus(t)); }, rand_tensor({6}, rng));
  check("sigmoid", [](const Tensor& t) { return sum(sigmoid(t)); }, rand_tensor({6}, rng));
  check("mean", [](const Tensor& t) { return mean(mul(t, t)); }, rand_tensor({7}, rng));
  check("sum_axis", [](const Tensor& t) { return sum(mul(sum_axis(t, 1), sum_axis(t, 1))); },
        rand_tensor({3, 4, 2}, rng));
  check("max", [](const Tensor& t) { return max_all(mul(t, t)); }, rand_tensor({9}, rng, 0.1, 2.0));
  check("matmul",
        [](const Tensor& t) {
          Tensor a = slice(t, 0, 0, 2);
          Tensor b = slice(t, 0, 2, 5);
          return sum(matmul(reshape(a, {2, 4}), reshape(b, {4, 3})));
        },
        rand_tensor({5, 4}, rng));
  check("reshape_transpose",
        [](const Tensor& t) { return sum(mul(transpose2d(reshape(t, {3, 4})), 2.0)); },
        rand_tensor({12}, rng));
  check("transpose3",
        [](const Tensor& t) {
          Tensor p = transpose(t, {2, 0, 1});
          return sum(mul(p, p));
        },
        rand_tensor({2, 3, 4}, rng));
  check("concat_slice",
        [](const Tensor& t) {
          Tensor c = concat({t, mul(t, 2.0)}, 0);
          return sum(mul(slice(c, 0, 1, 3), slice(c, 0, 3, 5)));
        },
        rand_tensor({3, 2}, rng));
  check("clamp", [](const Tensor& t) { return sum(clamp(t, -1.0, 1.0)); },
        rand_tensor({12}, rng));
  Tensor nw = rand_tensor({4, 3}, rng);
  check("normalize",
        [nw](const Tensor& t) { return sum(mul(normalize_axis(t, 1), nw)); },
        rand_tensor({4, 3}, rng));
}

TEST_CASE("grad_check conv and resize") {
  Rng rng(31);
  Tensor x = rand_tensor({1, 2, 5, 5}, rng);
  Tensor w = rand_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
  Tensor b = rand_tensor({3}, rng, -0.1, 0.1);

  auto res_x = grad_check(
      [&](const Tensor& t) {
        Tensor y = conv2d(t, w.detach(), b.detach(), 1, 1);
        return sum(mul(y, y));
      },
      x, 1e-5, 1e-5);
  CHECK(res_x.ok());

  auto res_w = grad_check(
      [&](const Tensor& t) {
        Tensor y = conv2d(x.detach(), t, b.detach(), 2, 1);
        return sum(mul(y, y));
      },
      w, 1e-5, 1e-5);
  CHECK(res_w.ok());

  auto res_b = grad_check(
      [&](const Tensor& t) {
        Tensor y = conv2d(x.detach(), w.detach(), t, 2, 1);
        return sum(mul(y, y));
      },
      b, 1e-5, 1e-5);
  CHECK(res_b.ok());

  auto res_near = grad_check(
      [](const Tensor& t) {
        Tensor y = resize_nearest(t, 6, 6);
        return sum(mul(y, y));
      },
      rand_tensor({1, 1, 3, 3}, rng), 1e-5, 1e-5);
  CHECK(res_near.ok());

  auto res_bil = grad_check(
      [](const Tensor& t) {
        Tensor y = resize_bilinear(t, 7, 5);
        return sum(mul(y, y));
      },
      rand_tensor({2, 4, 4}, rng), 1e-5, 1e-5);
  CHECK(res_bil.ok());
}

TEST_CASE("grad_check randomized op chain") {
  Rng rng(101);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor x = rand_tensor({4, 4}, rng, 0.2, 1.5);
    auto res = grad_check(
        [](const Tensor& t) {
          Tensor a = sigmoid(matmul(t, transpose2d(t)));
          Tensor b = ttanh(sum_axis(a, 0));
          Tensor c = normalize_axis(concat({b, mul(b, b)}, 0), 0);
          return mean(mul(c, texp(mul(c, 0.5))));
        },
        x, 1e-5, 1e-4);
    INFO("trial " << trial << " max_rel_err=" << res.max_rel_err);
    CHECK(res.ok());
  }
}

TEST_CASE("conv stride 2 shapes and values") {
  Tensor x = Tensor::from_data({1, 1, 4, 4},
                               {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16});
  Tensor w = Tensor::full({1, 1, 1, 1}, 1.0);
  Tensor y = conv2d(x, w, Tensor(), 2, 0);
  REQUIRE(y.shape() == Shape({1, 1, 2, 2}));
  CHECK(y.at(0) == 1.0);
  CHECK(y.at(1) == 3.0);
  CHECK(y.at(2) == 9.0);
  CHECK(y.at(3) == 11.0);
}

TEST_CASE("bilinear resize identity") {
  Rng rng(5);
  Tensor x = rand_tensor({1, 3, 3}, rng);
  Tensor y = resize_bilinear(x, 3, 3);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == doctest::Approx(x.at(i)));
}

TEST_CASE("no_grad suppresses recording") {
  Graph::active().clear();
  Tensor x = Tensor::scalar(2.0, true);
  {
    Graph::NoGrad ng;
    Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(Graph::active().size() == 0);
}

TEST_CASE("detach cuts graph") {
  Graph::active().clear();
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = mul(x, x);
  Tensor z = mul(y.detach(), x);
  backward(z);
  CHECK(x.grad()[0] == doctest::Approx(9.0));
}

TEST_CASE("adam converges on quadratic") {
  Graph::active().clear();
  Tensor x = Tensor::from_data({4}, {5.0, -3.0, 2.0, 1.0}, true);
  Adam opt({x}, 0.1);
  for (int i = 0; i < 400; ++i) {
    Graph::active().clear();
    opt.zero_grad();
    Tensor loss = sum(mul(x, x));
    backward(loss);
    opt.step();
  }
  for (double v : x.value()) CHECK(std::abs(v) < 1e-3);
}

TEST_CASE("linear layer forward") {
  Rng rng(3);
  Linear l = Linear::create(4, 2, rng);
  Tensor x = rand_tensor({3, 4}, rng);
  Tensor y = l.forward(x);
  REQUIRE(y.shape() == Shape({3, 2}));
  Tensor xv = reshape(slice(x, 0, 0, 1), {4});
  Tensor yv = l.forward(xv);
  CHECK(yv.at(0) == doctest::Approx(y.at(0)));
  CHECK(yv.at(1) == doctest::Approx(y.at(1)));
}

TEST_CASE("rng reproducible and portable") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  Rng child1 = c.child("stream");
  Rng c2(42);
  Rng child2 = c2.child("stream");
  CHECK(child1.next_u64() == child2.next_u64());
  Rng d(43);
  CHECK(Rng(42).next_u64() != d.next_u64());
}
