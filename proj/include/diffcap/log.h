#ifndef DIFFCAP_LOG_H_
#define DIFFCAP_LOG_H_

#include <string>
#include <vector>

namespace diffcap {

// Prints "warning: <message>" to stderr, or records it while a
// WarningCapture is alive on this thread.
void warn(const std::string& message);

class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }

 private:
  friend void warn(const std::string& message);
  std::vector<std::string> messages_;
  WarningCapture* previous_;
};

}  // namespace diffcap

#endif  // DIFFCAP_LOG_H_
