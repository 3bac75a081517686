// SPDX-License-Identifier: Apache-2.0
#include "fairprep/rng.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace fairprep {

double Rng::gumbel() {
  // u in (0, 1); the open interval keeps both logs finite.
  double u = uniform();
  while (u <= 0.0) u = uniform();
  return -std::log(-std::log(u));
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  shuffle(p);
  return p;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
}

}  // namespace fairprep
