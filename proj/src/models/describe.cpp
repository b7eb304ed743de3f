#include "kwscl/models/describe.hpp"

#include <iomanip>
#include <sstream>

namespace kwscl::models {

std::string describe_table(const Network& net) {
  std::ostringstream out;
  out << std::left << std::setw(22) << "layer" << std::setw(20) << "kind" << std::setw(14) << "output" << std::right
      << std::setw(10) << "params" << '\n';
  std::size_t total = 0;
  for (const auto& row : net.describe()) {
    out << std::left << std::setw(22) << row.name << std::setw(20) << row.kind << std::setw(14)
        << ad::shape_string(row.output) << std::right << std::setw(10) << row.params << '\n';
    total += row.params;
  }
  out << std::left << std::setw(56) << "total trainable" << std::right << std::setw(10) << total << '\n';
  return out.str();
}

nlohmann::json describe_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  std::size_t total = 0;
  for (const auto& row : net.describe()) {
    layers.push_back({{"name", row.name}, {"kind", row.kind}, {"output", row.output}, {"params", row.params}});
    total += row.params;
  }
  return {{"layers", layers}, {"total_params", total}, {"outputs", net.num_outputs()}};
}

}  // namespace kwscl::models
