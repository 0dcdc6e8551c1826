// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cmath>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "subsearch/cmaes.hpp"
#include "subsearch/errors.hpp"

using namespace subsearch;

namespace {

double sphere(const Vector& q) { return q.squaredNorm(); }

double rosenbrock(const Vector& x) {
  double s = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    s += 100.0 * std::pow(x(i + 1) - x(i) * x(i), 2) + std::pow(1.0 - x(i), 2);
  }
  return s;
}

std::vector<double> eval_all(const std::vector<Vector>& xs, double (*f)(const Vector&)) {
  std::vector<double> out;
  for (const Vector& x : xs) out.push_back(f(x));
  return out;
}

}  // namespace

TEST_CASE("default parameters match the textbook formulas") {
  // Reference values computed once outside the library (double precision, same formulas).
  struct Ref {
    std::size_t d;
    double mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu;
    std::size_t interval;
  };
  const Ref refs[] = {
      {64, 8.643080471708736, 0.13707699909700022, 1.1370769990970002, 0.060568951248221044,
       0.00046808447013479276, 0.003097059638918657, 1},
      {256, 8.643080471708736, 0.039470994223511774, 1.0394709942235119, 0.015510441173216424,
       3.0206035482595993e-05, 0.000203049770856698, 1},
      {512, 8.643080471708736, 0.020247732476869482, 1.0202477324768695, 0.007784143814002443,
       7.590549570663433e-06, 5.1163218652055755e-05, 3},
  };
  for (const Ref& r : refs) {
    const CmaParams p = default_params(r.d, 30);
    CHECK(p.mu == 15);
    CHECK(p.mu_eff == doctest::Approx(r.mu_eff).epsilon(1e-13));
    CHECK(p.c_sigma == doctest::Approx(r.c_sigma).epsilon(1e-13));
    CHECK(p.d_sigma == doctest::Approx(r.d_sigma).epsilon(1e-13));
    CHECK(p.c_c == doctest::Approx(r.c_c).epsilon(1e-13));
    CHECK(p.c_1 == doctest::Approx(r.c_1).epsilon(1e-13));
    CHECK(p.c_mu == doctest::Approx(r.c_mu).epsilon(1e-13));
    CHECK(p.eigen_interval == r.interval);
    CHECK(p.c_1 + p.c_mu <= 1.0);
  }
}

TEST_CASE("default weights") {
  const CmaParams p = default_params(256, 30);
  CHECK(std::abs(p.weights.sum() - 1.0) <= 1e-12);
  for (Eigen::Index i = 1; i < p.weights.size(); ++i) CHECK(p.weights(i) < p.weights(i - 1));
  CHECK(p.weights.minCoeff() > 0.0);
  const double n = 256.0;
  CHECK(p.chi_n == doctest::Approx(std::sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))).epsilon(1e-15));
}

TEST_CASE("parameter invariants hold across dimensions and population sizes") {
  for (std::size_t d : {1u, 2u, 5u, 64u, 1024u}) {
    for (std::size_t k : {4u, 5u, 12u, 30u, 101u}) {
      const CmaParams p = default_params(d, k);
      CHECK(p.mu >= 1);
      CHECK(2 * p.mu <= k);
      CHECK(p.c_1 + p.c_mu <= 1.0);
      CHECK_NOTHROW(validate(p));
    }
  }
  CHECK_THROWS_AS(default_params(8, 3), ConfigError);
  CHECK_THROWS_AS(default_params(0, 30), ConfigError);
  CHECK_THROWS_AS(default_params(8, 30, 0.0), ConfigError);
  CmaParams bad = default_params(8, 30);
  bad.weights(0) = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("ask draws standard normals when C = I, sigma = 1, m = 0") {
  const CmaParams p = default_params(10, 1000, 1.0);
  CmaEs es(p, Vector::Zero(10));
  RngStream rng(5, 0);
  std::vector<double> pooled;
  for (const Vector& c : es.ask(rng)) pooled.insert(pooled.end(), c.begin(), c.end());
  REQUIRE(pooled.size() == 10000);
  const auto [d, pvalue] = oracle::ks_normal(pooled);
  CHECK(pvalue > 0.01);
}

TEST_CASE("tiny sigma keeps candidates at the mean; ask is deterministic") {
  const CmaParams p = default_params(6, 12, 1e-9);
  Vector m(6);
  m << 1, 2, 3, 4, 5, 6;
  CmaEs a(p, m), b(p, m);
  RngStream ra(1, 0), rb(1, 0);
  const auto ca = a.ask(ra);
  const auto cb = b.ask(rb);
  for (std::size_t i = 0; i < ca.size(); ++i) {
    CHECK((ca[i] - m).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(ca[i] == cb[i]);
  }
}

TEST_CASE("one step on the sphere moves the mean toward the optimum") {
  const CmaParams p = default_params(4, 8, 0.5);
  std::size_t improved = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CmaEs es(p, Vector::Ones(4));
    RngStream rng(seed, 0);
    const auto c = es.ask(rng);
    es.tell(c, eval_all(c, sphere));
    improved += es.state().mean.norm() < 2.0;
    if (seed == 1) CHECK(es.state().mean.norm() < 2.0);
  }
  CHECK(improved >= 95);
}

TEST_CASE("ties are broken by index") {
  const CmaParams p = default_params(3, 10);
  CmaEs a(p, Vector::Zero(3)), b(p, Vector::Zero(3));
  RngStream ra(2, 0), rb(2, 0);
  const auto c = a.ask(ra);
  b.ask(rb);
  const std::vector<double> flat(10, 1.5);
  a.tell(c, flat);
  b.tell(c, flat);
  for (std::size_t i = 0; i < 10; ++i) CHECK(a.state().ranking[i] == i);
  CHECK(a.state().mean == b.state().mean);
  CHECK(a.state().cov == b.state().cov);
  CHECK(a.state().sigma == b.state().sigma);
  CHECK(a.state().best.found_at_eval == 1);
}

TEST_CASE("tell rejects non-finite fitness and names the candidate") {
  const CmaParams p = default_params(3, 6);
  CmaEs es(p, Vector::Zero(3));
  RngStream rng(3, 0);
  const auto c = es.ask(rng);
  std::vector<double> f(6, 1.0);
  f[4] = std::nan("");
  try {
    es.tell(c, f);
    FAIL("expected an EvaluationError");
  } catch (const EvaluationError& e) {
    CHECK(std::string(e.what()).find("candidate 4") != std::string::npos);
  }
  CHECK_THROWS_AS(es.tell(c, std::vector<double>(5, 1.0)), DomainError);
}

TEST_CASE("covariance stays symmetric positive definite and the best never worsens") {
  const CmaParams p = default_params(6, 12, 0.3);
  CmaEs es(p, Vector::Zero(6));
  RngStream rng(9, 0);
  double best = INFINITY;
  for (int g = 0; g < 400; ++g) {
    const auto c = es.ask(rng);
    es.tell(c, eval_all(c, rosenbrock));
    const Matrix& cov = es.state().cov;
    CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * cov.cwiseAbs().maxCoeff());
    CHECK(eig_sym(cov).eigenvalues.minCoeff() > 0.0);
    CHECK(es.state().sigma > 0.0);
    CHECK(es.state().best.f <= best);
    best = es.state().best.f;
  }
  CHECK(best < 1e-6);
}

TEST_CASE("updates depend only on fitness ranks") {
  const CmaParams p = default_params(5, 10);
  CmaEs base(p, Vector::Ones(5)), shifted(p, Vector::Ones(5)), scaled(p, Vector::Ones(5));
  RngStream r1(4, 0), r2(4, 0), r3(4, 0);
  for (int g = 0; g < 30; ++g) {
    const auto c = base.ask(r1);
    shifted.ask(r2);
    scaled.ask(r3);
    const std::vector<double> f = eval_all(c, sphere);
    std::vector<double> f_shift, f_scale;
    for (double v : f) {
      f_shift.push_back(v + 123.25);
      f_scale.push_back(7.5 * v);
    }
    base.tell(c, f);
    shifted.tell(c, f_shift);
    scaled.tell(c, f_scale);
    for (const CmaEs* other : {&shifted, &scaled}) {
      CHECK(other->state().ranking == base.state().ranking);
      CHECK(other->state().mean == base.state().mean);
      CHECK(other->state().sigma == base.state().sigma);
      CHECK(other->state().cov == base.state().cov);
    }
  }
}

TEST_CASE("optimize solves an embedded sphere through its own basis") {
  auto obj = benchmark_objective("sphere", 8, 256, 3);
  RngStream start(3, 9);
  const Vector e0 = obj->basis() * normal_sample(start, 8);
  Projection proj{obj->basis(), ProjectionKind::kIdentity, "basis"};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    OptimizeOptions opts;
    opts.budget = 5000;
    opts.target = 1e-10;
    RngStream sampling(seed, 0), noise(seed, 1);
    const OptimizeResult r = optimize(*obj, e0, proj, default_params(8, 30), opts, sampling, noise);
    CHECK(r.f_star < 1e-10);
    REQUIRE(r.evals_to_target);
    CHECK(*r.evals_to_target <= 5000);
  }
}

TEST_CASE("budget equal to the population runs one generation") {
  const FunctionObjective f(4, [](const Vector& e, const NoiseKey&) { return e.squaredNorm(); });
  OptimizeOptions opts;
  opts.budget = 30;
  RngStream s(1, 0), n(1, 1);
  const OptimizeResult r = optimize(f, Vector::Ones(4), identity_projection(4), default_params(4, 30), opts, s, n);
  CHECK(r.trace.size() == 1);
  CHECK(r.evals == 30);
  opts.budget = 29;
  CHECK_THROWS_AS(optimize(f, Vector::Ones(4), identity_projection(4), default_params(4, 30), opts, s, n), ConfigError);
  opts.budget = 89;
  CHECK(optimize(f, Vector::Ones(4), identity_projection(4), default_params(4, 30), opts, s, n).trace.size() == 2);
}

TEST_CASE("noise keys are pinned within a generation") {
  const VocabularyTable vocab = build_vocabulary(1, 100, 16);
  const SurrogateObjective obj(generate_scene(1, vocab), 20);
  std::vector<NoiseKey> keys;
  OptimizeOptions opts;
  opts.budget = 300;
  opts.on_batch = [&](const GenerationBatch& b) {
    keys.push_back(b.key);
    for (std::size_t i = 0; i < b.embeddings.size(); ++i) {
      CHECK(obj.evaluate(b.embeddings[i], b.key) == b.fitness[i]);
    }
  };
  RngStream s(2, 0), n(2, 1);
  optimize(obj, vocab.row(0), identity_projection(16), default_params(16, 30), opts, s, n);
  REQUIRE(keys.size() == 10);
  std::set<std::pair<std::uint64_t, std::uint64_t>> distinct;
  for (const NoiseKey& k : keys) distinct.insert({k.t_seed, k.eps_seed});
  CHECK(distinct.size() == keys.size());

  keys.clear();
  opts.noise_policy = NoisePolicy::kPinnedGlobal;
  RngStream s2(2, 0), n2(2, 1);
  optimize(obj, vocab.row(0), identity_projection(16), default_params(16, 30), opts, s2, n2);
  for (const NoiseKey& k : keys) CHECK(k == keys.front());
}

TEST_CASE("threaded evaluation returns values in candidate order") {
  const FunctionObjective f(
      3, [](const Vector& e, const NoiseKey& k) { return e.sum() * 1.5 + static_cast<double>(k.t_seed); }, true);
  std::vector<Vector> es;
  for (int i = 0; i < 31; ++i) es.push_back(Vector::Constant(3, i));
  const auto serial = evaluate_batch(f, es, {2, 3}, 1);
  const auto parallel = evaluate_batch(f, es, {2, 3}, 4);
  CHECK(serial == parallel);
  for (int i = 0; i < 31; ++i) CHECK(serial[static_cast<std::size_t>(i)] == 4.5 * i + 2);
}

TEST_CASE("an objective failure aborts with the partial trace") {
  std::atomic<int> calls{0};
  const FunctionObjective f(4, [&](const Vector& e, const NoiseKey&) {
    if (++calls > 3 * 30 + 5) throw EvaluationError("objective went away");
    return e.squaredNorm();
  });
  OptimizeOptions opts;
  opts.budget = 3000;
  RngStream s(1, 0), n(1, 1);
  try {
    optimize(f, Vector::Ones(4), identity_projection(4), default_params(4, 30), opts, s, n);
    FAIL("expected OptimizationAborted");
  } catch (const OptimizationAborted& e) {
    CHECK(e.partial_trace().size() == 3);
    CHECK(std::string(e.what()).find("objective went away") != std::string::npos);
  }
  calls = 0;
  const FunctionObjective nan_after(4, [&](const Vector& e, const NoiseKey&) {
    return ++calls > 40 ? std::nan("") : e.squaredNorm();
  });
  RngStream s2(1, 0), n2(1, 1);
  CHECK_THROWS_AS(optimize(nan_after, Vector::Ones(4), identity_projection(4), default_params(4, 30), opts, s2, n2),
                  OptimizationAborted);
}

TEST_CASE("pca subspace reaches an optimum that lies inside it") {
  const VocabularyTable vocab = build_vocabulary(4, 200, 24);
  const Projection p = build_pca_projection(vocab, 6);
  RngStream rng(4, 3);
  const Vector e0 = vocab.row(7);
  const Vector target = e0 + p.weights * normal_sample(rng, 6) * 0.05;
  const FunctionObjective f(24, [&](const Vector& e, const NoiseKey&) { return (e - target).squaredNorm(); });
  OptimizeOptions opts;
  opts.budget = 6000;
  RngStream s(4, 0), n(4, 1);
  const OptimizeResult r = optimize(f, e0, p, default_params(6, 30, 0.05), opts, s, n);
  CHECK(r.f_star <= 1e-8);
  CHECK((r.e_star - compose(e0, p, r.q_star)).norm() == 0.0);
}

TEST_CASE("trace records are consistent") {
  const FunctionObjective f(5, [](const Vector& e, const NoiseKey&) { return rosenbrock(e); });
  OptimizeOptions opts;
  opts.budget = 3000;
  RngStream s(7, 0), n(7, 1);
  const OptimizeResult r = optimize(f, Vector::Zero(5), identity_projection(5), default_params(5, 30), opts, s, n);
  double min_gen = INFINITY;
  for (std::size_t g = 0; g < r.trace.size(); ++g) {
    const TraceRecord& t = r.trace[g];
    CHECK(t.gen == g + 1);
    CHECK(t.evals == 30 * (g + 1));
    min_gen = std::min(min_gen, t.f_best_gen);
    CHECK(t.f_star == min_gen);
    CHECK(t.ms == 0);
    CHECK(t.c_cond >= 1.0);
  }
  CHECK(r.f_star == min_gen);
  CHECK(r.f_star == f.evaluate(r.e_star, {}));
}
