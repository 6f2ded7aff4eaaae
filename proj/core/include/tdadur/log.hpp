#pragma once

#include <functional>
#include <string>

namespace tdadur {

using WarningSink = std::function<void(const std::string&)>;

// Warnings go to stderr unless a sink is installed; returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace tdadur
