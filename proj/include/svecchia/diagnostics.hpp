#pragma once

#include <functional>
#include <string>
#include <vector>

namespace svecchia {

using WarningHandler = std::function<void(const std::string&)>;

/// Installs a process-wide warning sink and returns the previous one. The
/// default sink writes to stderr.
WarningHandler set_warning_handler(WarningHandler handler);

void warn(const std::string& message);

/// Scoped capture of warnings, mainly for tests.
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool contains(const std::string& needle) const;

 private:
  std::vector<std::string> messages_;
  WarningHandler previous_;
};

}  // namespace svecchia
