#include "qml/grid.hpp"

namespace qml {

Index next_fast_size(Index n) {
  Index candidate = std::max<Index>(n, 2);
  if (candidate % 2 != 0) ++candidate;
  for (;; candidate += 2) {
    Index r = candidate;
    for (Index p : {2, 3, 5})
      while (r % p == 0) r /= p;
    if (r == 1) return candidate;
  }
}

}  // namespace qml
