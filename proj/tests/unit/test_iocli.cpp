#include <catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "ebshrink/error.hpp"
#include "ebshrink/iocli.hpp"
#include "ebshrink/simmetrics.hpp"

using namespace ebshrink;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

MatrixXd random_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal;
  return MatrixXd::NullaryExpr(rows, cols, [&]() { return normal(rng); });
}

MatrixFile parse(const std::string& text, bool allow_na) {
  std::istringstream in(text);
  return parse_matrix_tsv(in, allow_na, "mem");
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no exception");
  return ErrorKind::Io;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ebshrink_" + name + "_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(EBSHRINK_CLI) + " " + args + " 2>/dev/null").c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("matrix tsv") {
  SECTION("plain body") {
    const MatrixFile f = parse("snp1\n1\n3\n", false);
    CHECK(f.col_ids == std::vector<std::string>{"snp1"});
    CHECK(f.values.rows() == 2);
    CHECK(f.values(0, 0) == 1.0);
    CHECK(f.values(1, 0) == 3.0);
    CHECK(f.row_ids.empty());
  }
  SECTION("row ids and NA") {
    const MatrixFile f = parse("#id\tliver\tlung\ns1\t1.5\tNA\ns2\t-2\t4e-3\n", true);
    CHECK(f.row_ids == std::vector<std::string>{"s1", "s2"});
    CHECK(f.na_mask(0, 1));
    CHECK(!f.na_mask(1, 1));
    CHECK(f.values(1, 1) == 4e-3);
  }
  SECTION("NA in covariates") {
    CHECK(kind_of([] { parse("a\nNA\n", false); }) == ErrorKind::NaInCovariates);
  }
  SECTION("overflow") {
    CHECK(kind_of([] { parse("a\n1e999\n", false); }) == ErrorKind::ParseError);
  }
  SECTION("error carries coordinates") {
    try {
      parse("a\tb\n1\t2\n3\tx\n", false);
      FAIL("no exception");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("mem:3:2") != std::string::npos);
    }
  }
  SECTION("ragged row") {
    CHECK(kind_of([] { parse("a\tb\n1\n", false); }) == ErrorKind::ParseError);
  }
  SECTION("round trip") {
    std::mt19937_64 rng(1);
    MatrixFile f;
    f.values = random_matrix(rng, 7, 3) * 1e3;
    f.values(0, 0) = 1e-300;
    f.col_ids = {"a", "b", "c"};
    std::ostringstream out;
    write_matrix_tsv(out, f);
    const MatrixFile back = parse(out.str(), false);
    CHECK(back.values == f.values);
  }
}

TEST_CASE("fit report") {
  std::mt19937_64 rng(2);
  const SimData data = simulate_setting(default_config(Setting::S1, 0.0, 2.0, 5));
  const Design design(data.x);
  const FitResult res = fit(design, data.panel);
  SECTION("json round trip reproduces predictions bitwise") {
    const FitResult back = fit_from_json(fit_to_json(res));
    CHECK(back.params.tau1 == res.params.tau1);
    CHECK(back.params.beta == res.params.beta);
    CHECK(back.loglik_trace == res.loglik_trace);
    CHECK(back.tissue_names == res.tissue_names);
    const MatrixXd xn = random_matrix(rng, 4, 30);
    CHECK(predict(xn, back) == predict(xn, res));
  }
  SECTION("malformed json") {
    CHECK(kind_of([] { fit_from_json("{\"params\": 3}"); }) == ErrorKind::ParseError);
  }
}

TEST_CASE("predict") {
  FitResult res;
  TissuePosterior post;
  post.post_mean = VectorXd::Constant(1, 1.5);
  res.posteriors.push_back(post);
  CHECK(predict(MatrixXd::Constant(1, 1, 2.0), res)(0, 0) == 3.0);
  res.posteriors[0].post_mean = VectorXd::Zero(1);
  CHECK(predict(MatrixXd::Constant(3, 1, 2.0), res).isZero(0.0));
  CHECK_THROWS_AS(predict(MatrixXd::Zero(2, 2), res), Error);

  FitResult basis;
  TissuePosterior p3;
  p3.post_mean = VectorXd::LinSpaced(3, 1.0, 3.0);
  basis.posteriors.push_back(p3);
  CHECK(predict(MatrixXd::Identity(3, 3), basis).col(0) == p3.post_mean);
}

TEST_CASE("cross-validation") {
  SECTION("squared correlation") {
    VectorXd t(4);
    t << 1, 2, 4, 3;
    CHECK(squared_correlation(t, t) == 1.0);
    CHECK(squared_correlation(2.0 * t.array() + 1.0, t) == Approx(1.0));
    CHECK(squared_correlation(VectorXd::Ones(4), t) == 0.0);
  }
  SECTION("folds partition the observed entries") {
    const SimData data = simulate_setting(default_config(Setting::S3, 0.0, 1.0, 9));
    const Design design(data.x);
    const CvReport report = kfold_cv(design, data.panel, 5, 3);
    for (Index t = 0; t < data.panel.m(); ++t) {
      for (Index i = 0; i < data.panel.n(); ++i) {
        const int f = report.fold_of(i, t);
        if (data.panel.mask(i, t)) {
          CHECK(f >= 0);
          CHECK(f < 5);
        } else {
          CHECK(f == -1);
        }
      }
    }
    CHECK(report.max_fold_size - report.min_fold_size <= 1);
    for (const auto& row : report.rows) {
      CHECK(row.n_test == 40);
      CHECK(row.pmse >= 0.0);
      CHECK(row.r2 >= 0.0);
      CHECK(row.r2 <= 1.0);
    }
    const CvReport again = kfold_cv(design, data.panel, 5, 3);
    CHECK(again.to_csv() == report.to_csv());
  }
  SECTION("too many folds") {
    const SimData data = simulate_setting(default_config(Setting::S3, 0.0, 1.0, 9));
    CHECK(kind_of([&] { kfold_cv(Design(data.x), data.panel, 41, 3); }) == ErrorKind::FoldTooSmall);
    CHECK(kind_of([&] { kfold_cv(Design(data.x), data.panel, 4, 3); }) == ErrorKind::FoldTooSmall);
  }
}

TEST_CASE("stouffer") {
  CHECK(stouffer_combine(VectorXd::Ones(4)).z == Approx(2.0));
  const auto zero = stouffer_combine(VectorXd::Zero(3));
  CHECK(zero.z == 0.0);
  CHECK(zero.p_value == 1.0);
  CHECK(stouffer_combine(VectorXd::Constant(1, -1.3)).z == -1.3);
  CHECK(stouffer_combine(VectorXd::Ones(4)).p_value == Approx(0.0455).margin(1e-4));
  CHECK_THROWS_AS(stouffer_combine(VectorXd::Constant(2, NAN)), Error);
}

TEST_CASE("command line") {
  const fs::path dir = scratch_dir("cli");
  const std::string d = dir.string() + "/";

  SECTION("exit codes") {
    CHECK(run_cli("") == 2);
    CHECK(run_cli("--help >/dev/null") == 0);
    CHECK(run_cli("fit --x " + d + "missing.tsv --y " + d + "missing.tsv --out " + d + "f.json") == 1);
    CHECK(run_cli("simulate --setting 9 --out " + d + "s.csv") == 2);
  }

  SECTION("simulate twice gives identical bytes") {
    REQUIRE(run_cli("simulate --setting 1 --rho 0 --beta-s 2 --reps 5 --seed 7 --out " + d + "a.csv") == 0);
    REQUIRE(run_cli("simulate --setting 1 --rho 0 --beta-s 2 --reps 5 --seed 7 --out " + d + "b.csv") == 0);
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  }

  SECTION("fit, predict and screen") {
    const SimData data = simulate_setting(default_config(Setting::S3, 0.0, 2.0, 5));
    MatrixFile x, y;
    x.values = data.x;
    for (Index j = 0; j < data.x.cols(); ++j) x.col_ids.push_back("snp" + std::to_string(j + 1));
    y.values = data.panel.y;
    y.na_mask = !data.panel.mask.array();
    y.col_ids = data.panel.tissue_names;
    write_matrix_tsv(d + "x.tsv", x);
    write_matrix_tsv(d + "y.tsv", y);
    REQUIRE(run_cli("fit --x " + d + "x.tsv --y " + d + "y.tsv --out " + d + "fit.json") == 0);
    const FitResult res = read_fit_json(d + "fit.json");
    for (std::size_t i = 1; i < res.loglik_trace.size(); ++i) {
      CHECK(res.loglik_trace[i] >= res.loglik_trace[i - 1] - 1e-9);
    }
    REQUIRE(run_cli("predict --x " + d + "x.tsv --fit " + d + "fit.json --out " + d + "pred.tsv") == 0);
    const MatrixFile pred = read_matrix_tsv(d + "pred.tsv", false);
    CHECK(pred.values == predict(data.x, res));

    std::ofstream(d + "z.tsv") << "#id\tt1\tt2\tt3\tt4\npairA\t1\t1\t1\t1\npairB\t0.1\t-0.2\t0\t0.3\n";
    REQUIRE(run_cli("screen --z " + d + "z.tsv --alpha 0.05 --out " + d + "keep.tsv") == 0);
    const std::string kept = slurp(dir / "keep.tsv");
    CHECK(kept.find("pairA\t2\t") != std::string::npos);
    CHECK(kept.find("pairB") == std::string::npos);
  }
  fs::remove_all(dir);
}
