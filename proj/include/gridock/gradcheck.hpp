/*
   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#ifndef GRIDOCK_GRADCHECK_HPP
#define GRIDOCK_GRADCHECK_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace gridock {

struct GradCheckReport {
  std::string name;
  bool passed = false;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  long comparisons = 0;
};

// Central finite differences against the analytic gradients of every
// differentiable stage: the density kernel derivative, grid backward, network
// weight/input gradients, and the full DOF chain.
std::vector<GradCheckReport> run_gradient_checks(std::uint64_t seed);

}  // namespace gridock

#endif
