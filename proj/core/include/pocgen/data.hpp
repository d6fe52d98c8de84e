#pragma once

#include <map>
#include <string>
#include <string_view>

namespace pocgen::data {

/// Data files bundled into the library at build time, keyed by file name.
const std::map<std::string, std::string_view>& all();

/// Contents of a bundled data file; throws pocgen::Error when unknown.
std::string_view get(std::string_view name);

}  // namespace pocgen::data
