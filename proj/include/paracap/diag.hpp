#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace paracap {

/// Emits a non-fatal warning. Warnings go to stderr unless a WarningCapture is
/// active on the calling thread, in which case they are collected there.
void warn(const std::string& message);

/// Silences stderr output for warnings process-wide (captures still collect).
void set_warnings_quiet(bool quiet);

/// RAII scope that collects warnings raised on the current thread.
class WarningCapture {
public:
    WarningCapture();
    ~WarningCapture();
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    const std::vector<std::string>& messages() const { return messages_; }
    std::size_t count() const { return messages_.size(); }

private:
    friend void warn(const std::string&);
    std::vector<std::string> messages_;
    WarningCapture* previous_;
};

}  // namespace paracap
