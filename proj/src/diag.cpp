#include "paracap/diag.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace paracap {

namespace {
thread_local WarningCapture* active_capture = nullptr;
std::atomic<bool> quiet{false};
std::mutex stderr_mutex;
}  // namespace

WarningCapture::WarningCapture() : previous_(active_capture) { active_capture = this; }

WarningCapture::~WarningCapture() { active_capture = previous_; }

void set_warnings_quiet(bool q) { quiet.store(q); }

void warn(const std::string& message) {
    if (active_capture != nullptr) {
        active_capture->messages_.push_back(message);
        return;
    }
    if (quiet.load()) return;
    std::lock_guard<std::mutex> lock(stderr_mutex);
    std::cerr << "warning: " << message << '\n';
}

}  // namespace paracap
