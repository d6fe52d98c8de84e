#include "pocgen/feedback.hpp"

namespace pocgen::feedback {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Valid: return "valid";
    case Verdict::Invalid: return "invalid";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

std::string ValidationFeedback::render() const {
  if (usability.empty()) return details;
  if (details.empty()) return usability;
  return usability + "\n" + details;
}

}  // namespace pocgen::feedback
