#include "apexflow/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace apexflow::log {

namespace {

Level from_env() {
    const char* env = std::getenv("APEXFLOW_LOG");
    if (env == nullptr) {
        return Level::Warn;
    }
    const std::string value(env);
    if (value == "error") return Level::Error;
    if (value == "info") return Level::Info;
    if (value == "debug") return Level::Debug;
    return Level::Warn;
}

std::atomic<int>& current() {
    static std::atomic<int> level{static_cast<int>(from_env())};
    return level;
}

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

constexpr const char* kNames[] = {"error", "warn", "info", "debug"};

}  // namespace

Level level() { return static_cast<Level>(current().load()); }

void set_level(Level lvl) { current().store(static_cast<int>(lvl)); }

void write(Level lvl, std::string_view message) {
    if (static_cast<int>(lvl) > current().load()) {
        return;
    }
    std::lock_guard lock(sink_mutex());
    std::clog << "[apexflow " << kNames[static_cast<int>(lvl)] << "] " << message << '\n';
}

}  // namespace apexflow::log
