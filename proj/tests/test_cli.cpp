#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace {

const std::string kCli = MIPH_CLI;
const std::string kFixture = std::string(MIPH_FIXTURES) + "/couples_p10.json";

struct Run {
  int status = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = "'" + kCli + "' " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<double> fields(const std::string& line) {
  std::vector<double> out;
  std::istringstream in(line);
  for (std::string cell; std::getline(in, cell, ',');) out.push_back(cell.empty() ? 0.0 : std::stod(cell));
  return out;
}

// Value of "key,value" in a summary listing.
std::string lookup(const std::string& text, const std::string& key) {
  for (const auto& l : lines(text))
    if (l.rfind(key + ",", 0) == 0) return l.substr(key.size() + 1);
  return {};
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
  CHECK(run("").status == 2);
  CHECK(run("eval /nonexistent/model.json").status == 2);
  CHECK(run("fit /nonexistent/data.csv").status == 2);
  CHECK(run("fit data.csv --structure triangle").status == 2);
  CHECK(run("nosuchcommand").status == 2);
}

TEST_CASE("eval at the origin and at a golden point") {
  Run r = run("eval '" + kFixture + "' --ages 63,63 --point 0,0 --point 0.12,0.30");
  REQUIRE(r.status == 0);
  const auto ls = lines(r.out);
  REQUIRE(ls.size() == 3);
  CHECK(ls[0] == "y1,y2,density,survival,cdf");
  CHECK(fields(ls[1])[3] == doctest::Approx(1.0));
  CHECK(fields(ls[1])[4] == doctest::Approx(0.0));
  const double s = fields(ls[2])[3];
  CHECK(s > 0.31);
  CHECK(s < 0.33);

  // The same point in years.
  r = run("eval '" + kFixture + "' --ages 63,63 --years --point 12,30");
  REQUIRE(r.status == 0);
  CHECK(fields(lines(r.out)[1])[3] == doctest::Approx(s).epsilon(1e-12));

  r = run("eval '" + kFixture + "' --grid 0:0.3:4");
  REQUIRE(r.status == 0);
  CHECK(lines(r.out).size() == 17);
}

TEST_CASE("measures reports dependence and curves") {
  const Run r = run("measures '" + kFixture + "' --ages 63,63 --grid 0.05:0.2:4 --cr-grid 1:29:5 -o measures_test.csv");
  REQUIRE(r.status == 0);
  CHECK(std::stod(lookup(r.out, "kendall_tau")) == doctest::Approx(0.30975).epsilon(1e-3));
  CHECK(std::stod(lookup(r.out, "spearman_rho")) == doctest::Approx(0.45198).epsilon(1e-3));
  const auto ls = lines(slurp("measures_test.csv"));
  REQUIRE(!ls.empty());
  CHECK(ls[0] == "curve,x1,x2,value");
  int psi1 = 0, cr = 0;
  for (const auto& l : ls) {
    if (l.rfind("psi1,", 0) == 0) ++psi1;
    if (l.rfind("cross_ratio,", 0) == 0) {
      ++cr;
      CHECK(fields(l.substr(12))[2] > 1.0);
    }
  }
  CHECK(psi1 == 16);
  CHECK(cr == 5);

  // psi1 from measures agrees with the ratio of eval outputs.
  std::string row;
  for (const auto& l : ls)
    if (l.rfind("psi1,0.1,0.15,", 0) == 0) row = l;
  REQUIRE(!row.empty());
  const double psi = fields(row.substr(5))[2];
  const Run joint = run("eval '" + kFixture + "' --point 0.1,0.15 --point 0.1,0 --point 0,0.15");
  REQUIRE(joint.status == 0);
  const auto jl = lines(joint.out);
  const double ratio = fields(jl[1])[3] / (fields(jl[2])[3] * fields(jl[3])[3]);
  CHECK(psi == doctest::Approx(ratio).epsilon(1e-10));
  std::remove("measures_test.csv");
}

TEST_CASE("simulate is reproducible and handles n = 0") {
  REQUIRE(run("--seed 5 simulate '" + kFixture + "' --ages 63,63 --ages 70,61 --n 50 --censoring 0.2 -o sim_a.csv").status == 0);
  REQUIRE(run("--seed 5 simulate '" + kFixture + "' --ages 63,63 --ages 70,61 --n 50 --censoring 0.2 -o sim_b.csv").status == 0);
  CHECK(slurp("sim_a.csv") == slurp("sim_b.csv"));
  CHECK(lines(slurp("sim_a.csv")).size() == 51);
  REQUIRE(run("simulate '" + kFixture + "' --n 0 -o sim_empty.csv").status == 0);
  CHECK(lines(slurp("sim_empty.csv")).size() == 1);
  CHECK(run("simulate '" + kFixture + "' --censoring 1.5 -o sim_bad.csv").status == 2);
  std::remove("sim_b.csv");
  std::remove("sim_empty.csv");
}

TEST_CASE("fit output is byte-identical across runs") {
  REQUIRE(run("--seed 5 simulate '" + kFixture + "' --ages 63,63 --ages 70,61 --n 150 --censoring 0.2 -o sim_fit.csv").status == 0);
  const std::string args = "fit sim_fit.csv --p 2 --design ages --iterations 5 --tolerance 0 --beta0 40 ";
  const Run a = run("--threads 1 " + args + "-o fit_a.json --trace trace_a.csv");
  const Run b = run("--threads 3 " + args + "-o fit_b.json");
  REQUIRE(a.status == 0);
  REQUIRE(b.status == 0);
  CHECK(slurp("fit_a.json") == slurp("fit_b.json"));
  CHECK(lookup(a.out, "p") == "2");
  CHECK(lookup(a.out, "iterations") == "5");
  CHECK(lines(slurp("trace_a.csv")).size() == 6);
  // The fitted model is usable by the other subcommands.
  CHECK(run("eval fit_a.json --point 0.1,0.1").status == 0);
  for (const char* f : {"sim_fit.csv", "fit_a.json", "fit_b.json", "trace_a.csv"}) std::remove(f);
}

TEST_CASE("beran survival curves") {
  REQUIRE(run("--seed 2 simulate '" + kFixture + "' --ages 63,63 --n 100 -o sim_beran.csv").status == 0);
  const Run r = run("beran sim_beran.csv --ages 63,63 --grid 0:0.4:5");
  REQUIRE(r.status == 0);
  const auto ls = lines(r.out);
  REQUIRE(ls.size() == 6);
  CHECK(ls[0] == "t,survival1,survival2");
  CHECK(fields(ls[1])[1] == 1.0);
  for (std::size_t k = 2; k < ls.size(); ++k) CHECK(fields(ls[k])[1] <= fields(ls[k - 1])[1]);
  // Query far from every row: the kernel weights underflow.
  CHECK(run("beran sim_beran.csv --ages 20,20").status == 3);
  std::remove("sim_beran.csv");
  std::remove("sim_a.csv");
}
