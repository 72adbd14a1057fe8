#include "echo/sim_annotations.hpp"

#include <array>
#include <cstdio>
#include <stdexcept>

#include "echo/core/rng.hpp"

namespace echo::sim {

namespace {

constexpr std::size_t kStyles = metrics::kOptionCount;

// Option phrases per style; phrases of one style share a head word.
const std::array<std::vector<std::string>, kStyles> kOptionPhrases = {{
    {"excited and hopeful", "excited to try it", "hopeful it works out", "really excited"},
    {"curious to learn more", "curious how it works", "want to learn the details", "curious and open"},
    {"worried it goes wrong", "worried and stressed", "stressed about cost", "somewhat worried"},
    {"indifferent either way", "neutral on this", "indifferent overall", "neutral and calm"},
}};

// Mood hints used inside conversations. Disjoint from option vocabulary.
const std::array<std::vector<std::string>, kStyles> kMoodCues = {{
    {"thrilled", "cheerful", "delighted", "upbeat"},
    {"puzzled", "inquisitive", "wondering", "intrigued"},
    {"anxious", "nervous", "uneasy", "tense"},
    {"meh", "shrug", "whatever", "unfazed"},
}};

const std::vector<std::string> kTopics = {"garden", "laptop", "vacation", "recipe", "bicycle",
                                          "concert", "apartment", "painting", "budget", "wedding"};

const std::vector<std::string> kQuestions = {
    "How does the author feel about the {t}?",
    "What best describes the author's attitude toward the {t}?",
    "Which answer matches the author's reaction to the {t}?",
    "How would the author describe their view of the {t}?",
};

std::string fill(std::string tmpl, const std::string& topic) {
  const auto at = tmpl.find("{t}");
  if (at != std::string::npos) tmpl.replace(at, 3, topic);
  return tmpl;
}

}  // namespace

std::vector<metrics::AnnotationRecord> generate_annotation_records(const AnnotationSimConfig& cfg) {
  if (cfg.min_conversations == 0 || cfg.min_conversations > cfg.max_conversations)
    throw std::invalid_argument("annotation sim: bad conversation range");
  const core::RngSeed base{cfg.seed};
  std::vector<metrics::AnnotationRecord> out;
  out.reserve(cfg.users * cfg.tasks_per_user);

  for (std::size_t u = 0; u < cfg.users; ++u) {
    auto rng = core::Rng::substream(base, "annotation-user", u);
    char user_id[32];
    std::snprintf(user_id, sizeof user_id, "user%04zu", u);
    const std::size_t usual = rng.below(kStyles);
    const std::size_t n_conv =
        cfg.min_conversations + rng.below(cfg.max_conversations - cfg.min_conversations + 1);

    struct Conversation {
      std::string id, text, topic;
      std::size_t mood = 0, cue_style = 0;
    };
    std::vector<Conversation> convs(n_conv);
    for (std::size_t c = 0; c < n_conv; ++c) {
      auto& conv = convs[c];
      conv.id = std::string(user_id) + "-c" + std::to_string(c);
      conv.mood = rng.bernoulli(cfg.mood_follows_user) ? usual : rng.below(kStyles);
      conv.cue_style = rng.bernoulli(cfg.cue_reliability) ? conv.mood : rng.below(kStyles);
      conv.topic = rng.pick(kTopics);
      conv.text = "Lately my " + conv.topic + " plans leave me " + rng.pick(kMoodCues[conv.cue_style]) + ".";
    }

    for (std::size_t t = 0; t < cfg.tasks_per_user; ++t) {
      const auto& conv = convs[rng.below(n_conv)];
      metrics::AnnotationRecord r;
      r.record_id = std::string(user_id) + "-t" + std::to_string(t);
      r.user_id = user_id;
      r.conversation_id = conv.id;
      r.conversation = conv.text;
      r.question = fill(rng.pick(kQuestions), conv.topic);

      std::vector<std::size_t> order{0, 1, 2, 3};
      rng.shuffle(order);
      std::array<std::size_t, kStyles> position{};
      for (std::size_t i = 0; i < kStyles; ++i) {
        r.options.push_back(rng.pick(kOptionPhrases[order[i]]));
        position[order[i]] = i;
      }

      std::size_t answer;
      if (rng.bernoulli(cfg.answer_follows_mood)) {
        answer = conv.mood;
      } else {
        answer = rng.bernoulli(0.5) ? usual : rng.below(kStyles);
      }
      r.author_label = position[answer];

      for (const auto& [source, reliability] : cfg.source_reliability) {
        auto& labels = r.sources[source];
        for (std::size_t a = 0; a < cfg.annotators_per_source; ++a)
          labels.push_back(position[rng.bernoulli(reliability) ? conv.cue_style : rng.below(kStyles)]);
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace echo::sim
