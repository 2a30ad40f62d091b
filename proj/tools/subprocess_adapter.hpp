#pragma once

// Model adapter that talks to an external process: one process per prompt,
// the prompt manifest path on its stdin, the first stdout line is the answer.

#include <chrono>
#include <string>

#include "omt/needle.hpp"

namespace omt::cli {

class SubprocessAdapter : public needle::ModelAdapter {
 public:
  explicit SubprocessAdapter(std::string command, std::chrono::milliseconds timeout = std::chrono::minutes(10))
      : command_(std::move(command)), timeout_(timeout) {}

  // Throws std::runtime_error when the process fails, times out, or prints nothing.
  std::string answer(const needle::NeedlePrompt& prompt) override;

 private:
  std::string command_;
  std::chrono::milliseconds timeout_;
};

}  // namespace omt::cli
