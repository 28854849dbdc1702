#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include "tws/matrix_market.hpp"

using namespace tws;

TEST_CASE("store then load round-trips", "[io]") {
  const auto dir = std::filesystem::temp_directory_path() / "tws_mm_test";
  std::filesystem::create_directories(dir);
  store_matrix_market(dir / "id.mtx", SparseMatrix::identity(3));
  CHECK(load_matrix_market(dir / "id.mtx") == SparseMatrix::identity(3));

  const std::vector<Triplet> t{{0, 1, 0.1}, {1, 0, 1.0 / 3.0}, {2, 2, 1e-300}};
  const auto a = SparseMatrix::from_triplets(t, 3, 3);
  store_matrix_market(dir / "a.mtx", a);
  CHECK(load_matrix_market(dir / "a.mtx") == a);

  store_marginal(dir / "m.txt", Vector{0.1, 0.2, 0.7});
  CHECK(load_marginal(dir / "m.txt") == Vector{0.1, 0.2, 0.7});
  std::filesystem::remove_all(dir);
}

TEST_CASE("symmetric files are expanded", "[io]") {
  std::istringstream in("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 0.5\n");
  const auto a = read_matrix_market(in);
  CHECK(a.nnz() == 2);
  CHECK(a.at(0, 1) == 0.5);
  CHECK(a.at(1, 0) == 0.5);
}

TEST_CASE("comments, blank lines and integer fields", "[io]") {
  std::istringstream in(
      "%%MatrixMarket matrix coordinate integer general\n% comment\n\n2 2 2\n1 1 3\n% mid\n2 2 4\n");
  const auto a = read_matrix_market(in);
  CHECK(a.at(0, 0) == 3.0);
  CHECK(a.at(1, 1) == 4.0);
}

TEST_CASE("marginal file", "[io]") {
  std::istringstream in("0.5\n0.5\n");
  CHECK(read_marginal(in) == Vector{0.5, 0.5});
  std::istringstream blanks("\n 0.25 \n\n0.75\n\n");
  CHECK(read_marginal(blanks) == Vector{0.25, 0.75});
  std::istringstream bad("0.5\nabc\n");
  CHECK_THROWS_AS(read_marginal(bad), ParseError);
}

TEST_CASE("malformed inputs are rejected", "[io]") {
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return read_matrix_market(in);
  };
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(parse("%%MatrixMarket matrix array real general\n2 2\n"), ParseError);
  CHECK_THROWS_AS(parse("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n"), ParseError);
  CHECK_THROWS_AS(parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n"), ParseError);
  CHECK_THROWS_AS(parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 inf\n"), ParseError);
  CHECK_THROWS_AS(parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 nan\n"), ParseError);
  CHECK_THROWS_AS(parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n"), ParseError);
  CHECK_THROWS_AS(parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1.0\n2 2 1.0\n"),
                  ParseError);
  CHECK_THROWS_AS(
      parse("%%MatrixMarket matrix coordinate real general\n99999999999999999999999 2 1\n1 1 1.0\n"),
      ParseError);
  CHECK_THROWS_AS(parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n1 1 2.0\n"),
                  ParseError);
  CHECK_THROWS_AS(load_matrix_market("/nonexistent/file.mtx"), ParseError);
}
