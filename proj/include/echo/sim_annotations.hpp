#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "echo/metrics.hpp"

namespace echo::sim {

/// Synthetic annotation data. Every option set holds one phrase from each of
/// four answer styles. An author answers from the mood of the current
/// conversation, which leans towards the author's usual style; conversation
/// text only hints at the mood through cue words that never appear in option
/// phrases. Third-party annotators read the hint, get it right with their
/// source's reliability and otherwise guess.
struct AnnotationSimConfig {
  std::uint64_t seed = 7;
  std::size_t users = 500;
  std::size_t tasks_per_user = 6;
  std::size_t min_conversations = 2;
  std::size_t max_conversations = 3;
  /// P(conversation mood = the user's usual style).
  double mood_follows_user = 0.6;
  /// P(author answer = conversation mood); otherwise the usual style or a guess.
  double answer_follows_mood = 0.7;
  /// P(the conversation's cue word reflects the true mood).
  double cue_reliability = 0.8;
  std::size_t annotators_per_source = 3;
  std::map<std::string, double> source_reliability{{"expert", 0.5}, {"llm", 0.55}, {"mturk", 0.4}};
};

std::vector<metrics::AnnotationRecord> generate_annotation_records(const AnnotationSimConfig& cfg);

}  // namespace echo::sim
