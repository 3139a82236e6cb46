#ifndef PERMIX_VERSION_HPP
#define PERMIX_VERSION_HPP

namespace permix {

inline constexpr const char* kVersion = "0.1.0";

} // namespace permix

#endif
