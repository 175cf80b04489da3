#pragma once

// Scripted providers for offline tests.

#include <atomic>
#include <deque>
#include <mutex>
#include <string>
#include <vector>

#include "saap/llm_gateway.hpp"
#include "saap/record_schema.hpp"

namespace saap::testing {

// Replies from a fixed queue, in order, and keeps every request.
class ScriptedProvider : public Provider {
 public:
  explicit ScriptedProvider(std::vector<std::string> replies);
  std::string complete(const CompletionRequest& request) override;
  std::string name() const override { return "scripted"; }

  std::vector<CompletionRequest> requests() const;
  std::size_t calls() const;

 private:
  mutable std::mutex mutex_;
  std::deque<std::string> replies_;
  std::vector<CompletionRequest> requests_;
};

// Always returns `base`, except that at a nonzero temperature biasLevel is
// moved by a uniform offset in [-jitter, +jitter] drawn from the request seed.
class JitterProvider : public Provider {
 public:
  JitterProvider(AnalysisRecord base, double jitter);
  std::string complete(const CompletionRequest& request) override;
  std::string name() const override { return "jitter"; }

 private:
  AnalysisRecord base_;
  double jitter_;
  std::atomic<std::uint64_t> unseeded_{0};
};

// Throws the given error kind for the first `failures` calls, then answers.
class FlakyProvider : public Provider {
 public:
  FlakyProvider(int failures, bool fatal, std::string reply);
  std::string complete(const CompletionRequest& request) override;
  std::string name() const override { return "flaky"; }
  int calls() const { return calls_; }

 private:
  int failures_;
  bool fatal_;
  std::string reply_;
  std::atomic<int> calls_{0};
};

// Finding narrative scripted for the sample deviation (opening sentence of the
// published finding).
inline constexpr std::string_view kDeviationNarrative =
    "This judgment shows a significant deviation in bias, unusual for its type.";

// SARA's closing decision in the scripted hearing.
std::string scripted_decision_text();

// Stub rules that replay the scripted hearing: SARA requests a claim, SHIRLEY
// claims, CRITIC rebuts, SARA questions SHIRLEY then CRITIC (one question
// each), both answer, and SARA rejects the claim citing Rules 31 and 32.
StubScript hearing_script();
// SARA never decides; she keeps asking for more submissions.
StubScript stalling_script();
// Variant that upholds the claim with a bias assessment of about 6.
StubScript upheld_hearing_script();

}  // namespace saap::testing
