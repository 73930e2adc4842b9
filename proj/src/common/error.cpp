#include "lsdm/common/error.hpp"

#include <iostream>
#include <utility>

namespace lsdm {

namespace {
WarningSink& current_sink() {
  static WarningSink sink;
  return sink;
}
}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
  return std::exchange(current_sink(), std::move(sink));
}

void warn(std::string_view message) {
  if (const auto& sink = current_sink()) {
    sink(message);
    return;
  }
  std::cerr << "warning: " << message << '\n';
}

}  // namespace lsdm
