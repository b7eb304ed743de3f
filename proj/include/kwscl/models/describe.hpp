#pragma once

#include <string>

#include "json.hpp"
#include "kwscl/models/layers.hpp"

namespace kwscl::models {

std::string describe_table(const Network& net);
nlohmann::json describe_json(const Network& net);

}  // namespace kwscl::models
