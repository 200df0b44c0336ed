#ifndef KINFRAC_VERSION_HPP
#define KINFRAC_VERSION_HPP

namespace kinfrac {
inline constexpr const char* version_string = "0.1.0";
}

#endif
