#include "handtraj/common/rng.hpp"

#include <cstring>
#include <sstream>

namespace handtraj {

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
  std::uint64_t bits;
  std::memcpy(&bits, &spare_, sizeof bits);
  os << bits;
  return os.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream is(state);
  int spare_flag = 0;
  std::uint64_t bits = 0;
  is >> engine_ >> spare_flag >> bits;
  has_spare_ = spare_flag != 0;
  std::memcpy(&spare_, &bits, sizeof bits);
}

}  // namespace handtraj
