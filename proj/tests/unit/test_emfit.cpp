#include <catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>

#include "ebshrink/emfit.hpp"
#include "ebshrink/error.hpp"
#include "oracles.hpp"

using namespace ebshrink;
using Catch::Approx;

namespace {

MatrixXd random_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal;
  return MatrixXd::NullaryExpr(rows, cols, [&]() { return normal(rng); });
}

PriorParams params_of(double tau1, VectorXd beta, double eta, double sigma2) {
  PriorParams th;
  th.tau1 = tau1;
  th.beta = std::move(beta);
  th.eta = eta;
  th.sigma2 = sigma2;
  return th;
}

MatrixXd resp_from(const VectorXd& t1) {
  MatrixXd resp(t1.size(), 2);
  resp.col(0) = 1.0 - t1.array();
  resp.col(1) = t1;
  return resp;
}

}  // namespace

TEST_CASE("panel validation") {
  std::mt19937_64 rng(1);
  const Design d(random_matrix(rng, 6, 2));
  SECTION("default names") {
    const auto panel = make_panel(random_matrix(rng, 6, 2));
    CHECK(panel.tissue_names == std::vector<std::string>{"tissue_1", "tissue_2"});
    CHECK(panel.complete());
  }
  SECTION("too few observed entries") {
    MaskMatrix mask = MaskMatrix::Constant(6, 2, true);
    mask.col(1).head(4).setConstant(false);
    CHECK_THROWS_AS(validate_panel(d, make_panel(random_matrix(rng, 6, 2), mask)), Error);
  }
  SECTION("unobserved entries are never read") {
    MatrixXd y = random_matrix(rng, 6, 2);
    MaskMatrix mask = MaskMatrix::Constant(6, 2, true);
    mask(0, 0) = false;
    y(0, 0) = std::nan("");
    const auto panel = make_panel(y, mask);
    CHECK_NOTHROW(validate_panel(d, panel));
    CHECK(std::isfinite(observed_loglik(d, panel, params_of(0.5, VectorXd::Zero(2), 1.0, 1.0))));
    y(0, 0) = 1e300;
    const auto other = make_panel(y, mask);
    CHECK(observed_loglik(d, panel, params_of(0.5, VectorXd::Zero(2), 1.0, 1.0)) ==
          observed_loglik(d, other, params_of(0.5, VectorXd::Zero(2), 1.0, 1.0)));
  }
  SECTION("non-finite observed entry") {
    MatrixXd y = random_matrix(rng, 6, 2);
    y(2, 1) = INFINITY;
    CHECK_THROWS_AS(validate_panel(d, make_panel(y)), Error);
  }
}

TEST_CASE("e_step") {
  std::mt19937_64 rng(2);
  SECTION("indistinguishable components") {
    const Design d(random_matrix(rng, 10, 2));
    const auto panel = make_panel(random_matrix(rng, 10, 4));
    const auto es = e_step(d, panel, params_of(0.5, VectorXd::Zero(2), kEtaFloor, 1.0));
    CHECK((es.resp.array() - 0.5).abs().maxCoeff() < 1e-6);
  }
  SECTION("dense oracle") {
    for (int rep = 0; rep < 10; ++rep) {
      const MatrixXd x = random_matrix(rng, 5, 2);
      const Design d(x);
      MaskMatrix mask = MaskMatrix::Constant(5, 3, true);
      if (rep % 2 == 1) mask(rep % 5, 1) = false;
      const auto panel = make_panel(1.5 * random_matrix(rng, 5, 3), mask);
      const PriorParams th = params_of(0.45, random_matrix(rng, 2, 1), 1.3, 0.9);
      const auto es = e_step(d, panel, th);
      for (Index t = 0; t < 3; ++t) {
        CHECK(std::abs(es.resp(t, 1) - oracle::activity(x, panel.y.col(t), panel.mask.col(t), th)) < 1e-9);
      }
      CHECK(es.loglik == Approx(oracle::observed_loglik(x, panel, th)).epsilon(1e-12));
    }
  }
  SECTION("rows sum to one") {
    const Design d(random_matrix(rng, 30, 3));
    const auto panel = make_panel(5.0 * random_matrix(rng, 30, 20));
    const auto es = e_step(d, panel, params_of(0.2, VectorXd::Ones(3), 4.0, 2.0));
    for (Index t = 0; t < 20; ++t) CHECK(std::abs(es.resp.row(t).sum() - 1.0) <= 1e-15);
  }
}

TEST_CASE("m_step_complete") {
  std::mt19937_64 rng(3);
  const MatrixXd x = random_matrix(rng, 8, 2);
  const Design d(x);
  const auto panel = make_panel(2.0 * random_matrix(rng, 8, 4));

  SECTION("tau is the mean responsibility") {
    VectorXd t1(4);
    t1 << 1, 1, 0, 0;
    CHECK(m_step_complete(d, panel, resp_from(t1)).tau1 == Approx(0.5));
  }
  SECTION("uniform weights average the OLS estimates") {
    const PriorParams th = m_step_complete(d, panel, resp_from(VectorXd::Ones(4)));
    VectorXd mean = VectorXd::Zero(2);
    for (Index t = 0; t < 4; ++t) mean += ols(d, panel.column(t), panel.column_mask(t)) / 4.0;
    CHECK((th.beta - mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(th.tau1 == 1.0 - kTauClamp);
  }
  SECTION("no active evidence") {
    CHECK_THROWS_AS(m_step_complete(d, panel, resp_from(VectorXd::Zero(4))), Error);
  }
  SECTION("matches the numeric Q maximizer") {
    int checked = 0;
    for (int rep = 0; rep < 20 && checked < 6; ++rep) {
      const auto draw = oracle::draw_model(rng, 8, 2, 4, params_of(0.6, VectorXd::Ones(2), 6.0, 0.5));
      const Design dd(draw.x);
      VectorXd t1(4);
      t1 << 0.9, 0.7, 0.35, 0.8;
      const MatrixXd resp = resp_from(t1);
      const PriorParams got = m_step_complete(dd, draw.panel, resp);
      if (got.eta < 1e-3) continue;  // boundary optimum; the oracle is unconstrained
      ++checked;
      const PriorParams ref = oracle::maximize_q(draw.x, draw.panel, resp);
      CHECK(got.tau1 == Approx(ref.tau1).epsilon(1e-5));
      CHECK(got.sigma2 == Approx(ref.sigma2).epsilon(1e-5));
      CHECK(got.eta == Approx(ref.eta).epsilon(1e-5));
      CHECK((got.beta - ref.beta).cwiseAbs().maxCoeff() < 1e-5 * (1.0 + ref.beta.cwiseAbs().maxCoeff()));

      const auto q = [&](const VectorXd& v) {
        return expected_complete_loglik(dd, draw.panel, resp, oracle::unpack(v));
      };
      CHECK(oracle::fd_gradient(q, oracle::pack(got), 1e-5).cwiseAbs().maxCoeff() <= 1e-5);
    }
    CHECK(checked >= 3);
  }
  SECTION("eta floor binds") {
    // Identical active columns carry no between-task spread.
    const VectorXd col = random_matrix(rng, 8, 1);
    const auto same = make_panel(col.replicate(1, 4));
    const PriorParams th = m_step_complete(d, same, resp_from(VectorXd::Ones(4)));
    CHECK(th.eta == kEtaFloor);
    CHECK(th.sigma2 > 0.0);
    const MatrixXd resp = resp_from(VectorXd::Ones(4));
    for (const double f : {0.9, 1.1}) {
      PriorParams other = th;
      other.sigma2 *= f;
      CHECK(expected_complete_loglik(d, same, resp, other) <= expected_complete_loglik(d, same, resp, th));
    }
  }
}

TEST_CASE("m_step_masked") {
  std::mt19937_64 rng(4);
  SECTION("full mask reduces to the complete update for tau and beta") {
    const auto draw = oracle::draw_model(rng, 20, 3, 6, params_of(0.5, VectorXd::Ones(3), 10.0, 1.0));
    const Design d(draw.x);
    VectorXd t1(6);
    t1 << 0.9, 0.1, 0.5, 0.7, 0.3, 0.95;
    const MatrixXd resp = resp_from(t1);
    const PriorParams a = m_step_complete(d, draw.panel, resp);
    const PriorParams b = m_step_masked(d, draw.panel, resp, params_of(0.5, VectorXd::Zero(3), 3.0, 2.0));
    CHECK(std::abs(a.tau1 - b.tau1) < 1e-8);
    CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() < 1e-8);
  }
  SECTION("no active evidence keeps beta and floors tau") {
    const auto draw = oracle::draw_model(rng, 20, 2, 5, params_of(0.5, VectorXd::Ones(2), 5.0, 1.0), 0.2);
    const Design d(draw.x);
    const PriorParams cur = params_of(0.5, VectorXd::Constant(2, 0.25), 2.0, 1.5);
    const PriorParams next = m_step_masked(d, draw.panel, resp_from(VectorXd::Zero(5)), cur);
    CHECK(next.beta == cur.beta);
    CHECK(next.tau1 == kTauClamp);
  }
  SECTION("never decreases Q or the observed likelihood") {
    for (int rep = 0; rep < 20; ++rep) {
      const auto draw = oracle::draw_model(rng, 25, 3, 8, params_of(0.5, VectorXd::Ones(3), 8.0, 1.0), 0.25);
      const Design d(draw.x);
      const PriorParams cur = init_params(d, draw.panel);
      const auto es = e_step(d, draw.panel, cur);
      const PriorParams next = m_step_masked(d, draw.panel, es.resp, cur);
      CHECK(expected_complete_loglik(d, draw.panel, es.resp, next) >=
            expected_complete_loglik(d, draw.panel, es.resp, cur) - 1e-10);
      CHECK(observed_loglik(d, draw.panel, next) >= es.loglik - 1e-10);
    }
  }
}

TEST_CASE("init_params") {
  std::mt19937_64 rng(5);
  const Design d(random_matrix(rng, 12, 3));
  SECTION("identical columns") {
    const VectorXd col = random_matrix(rng, 12, 1);
    const PriorParams th = init_params(d, make_panel(col.replicate(1, 5)));
    CHECK((th.beta - ols(d, col, Mask::Constant(12, true))).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(th.tau1 == 0.5);
  }
  SECTION("noise-free responses") {
    const MatrixXd y = d.x() * random_matrix(rng, 3, 4);
    const PriorParams th = init_params(d, make_panel(y));
    CHECK(th.sigma2 > 0.0);
    CHECK(th.sigma2 <= 1e-10 * y.squaredNorm() / 48.0);
    CHECK(th.sigma2 >= 1e-12 * y.squaredNorm() / 48.0 * (1.0 - 1e-12));
  }
  SECTION("eta floor") {
    for (int rep = 0; rep < 20; ++rep) {
      const PriorParams th = init_params(d, make_panel(random_matrix(rng, 12, 6)));
      CHECK(th.eta >= 10.0 * kEtaFloor);
    }
  }
}

TEST_CASE("fit") {
  std::mt19937_64 rng(6);

  SECTION("trace is nondecreasing on complete and masked panels") {
    for (int rep = 0; rep < 10; ++rep) {
      const double miss = rep % 2 == 0 ? 0.0 : 0.2;
      const auto draw = oracle::draw_model(rng, 30, 4, 15, params_of(0.5, VectorXd::Ones(4), 20.0, 2.0), miss);
      const FitResult res = fit(Design(draw.x), draw.panel);
      REQUIRE(res.loglik_trace.size() >= 2);
      for (std::size_t i = 1; i < res.loglik_trace.size(); ++i) {
        CHECK(res.loglik_trace[i] >= res.loglik_trace[i - 1] - 1e-9);
      }
      if (res.converged) {
        const double last = res.loglik_trace.back();
        const double prev = res.loglik_trace[res.loglik_trace.size() - 2];
        CHECK(std::abs(last - prev) <= 1e-8 * std::max(1.0, std::abs(prev)));
      }
      CHECK(res.posteriors.size() == 15);
    }
  }

  SECTION("recovers tau1") {
    int hits = 0;
    for (int rep = 0; rep < 50; ++rep) {
      const auto draw = oracle::draw_model(rng, 50, 5, 200, params_of(0.5, VectorXd::Ones(5), 50.0, 1.0));
      const FitResult res = fit(Design(draw.x), draw.panel);
      if (std::abs(res.params.tau1 - 0.5) <= 0.1) ++hits;
    }
    CHECK(hits >= 45);
  }

  SECTION("task permutation") {
    const auto draw = oracle::draw_model(rng, 20, 2, 10, params_of(0.5, VectorXd::Ones(2), 10.0, 1.0));
    const Design d(draw.x);
    std::vector<Index> order(10);
    std::iota(order.begin(), order.end(), 0);
    std::reverse(order.begin(), order.end());
    MatrixXd y2(20, 10);
    for (Index t = 0; t < 10; ++t) y2.col(t) = draw.panel.y.col(order[static_cast<std::size_t>(t)]);
    const FitResult a = fit(d, draw.panel);
    const FitResult b = fit(d, make_panel(y2));
    CHECK(std::abs(a.params.tau1 - b.params.tau1) <= 1e-12 * (1.0 + a.params.tau1));
    CHECK(std::abs(a.params.eta - b.params.eta) <= 1e-9 * a.params.eta);
    CHECK(std::abs(a.params.sigma2 - b.params.sigma2) <= 1e-9 * a.params.sigma2);
    for (Index t = 0; t < 10; ++t) {
      CHECK(std::abs(a.posteriors[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])].h -
                     b.posteriors[static_cast<std::size_t>(t)].h) < 1e-9);
    }
  }

  SECTION("stationary at convergence") {
    for (const double miss : {0.0, 0.15}) {
      const auto draw = oracle::draw_model(rng, 12, 2, 30, params_of(0.5, VectorXd::Ones(2), 8.0, 1.0), miss);
      const Design d(draw.x);
      FitOptions opt;
      opt.tol = 1e-14;
      opt.max_iter = 5000;
      const FitResult res = fit(d, draw.panel, opt);
      REQUIRE(res.params.eta > 1e-3);
      REQUIRE(res.params.tau1 > 1e-3);
      REQUIRE(res.params.tau1 < 1.0 - 1e-3);
      const auto ll = [&](const VectorXd& v) { return observed_loglik(d, draw.panel, oracle::unpack(v)); };
      const double value = res.loglik_trace.back();
      CHECK(oracle::fd_gradient(ll, oracle::pack(res.params), 1e-5).cwiseAbs().maxCoeff() <=
            1e-3 * (1.0 + std::abs(value)));
    }
  }

  SECTION("pure noise stays finite") {
    MatrixXd x(10, 1);
    x.setOnes();
    x(0, 0) = 2.0;
    const FitResult res = fit(Design(x), make_panel(1e-3 * random_matrix(rng, 10, 3)));
    CHECK(res.converged);
    CHECK(std::isfinite(res.params.sigma2));
    CHECK(std::isfinite(res.params.eta));
    for (const auto& post : res.posteriors) CHECK(std::isfinite(post.h));
  }
}
