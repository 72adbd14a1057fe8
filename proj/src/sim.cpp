#include "echo/sim.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "echo/config.hpp"

namespace echo::sim {

using core::FeatureKind;
using core::FeatureSpec;
using core::FeatureValue;

namespace {

struct FeatureDef {
  const char* id;
  const char* name;
  FeatureKind kind;
  std::vector<std::string> labels;
  std::vector<std::vector<std::string>> cues;  // per label; free text: one list of answers
  std::vector<std::string> keywords;
  std::vector<std::string> templates;
  const char* question;
  bool product = false;
};

// Product nouns per category label; also the desired-item vocabulary.
const std::vector<std::vector<std::string>> kProductNouns = {
    {"tent", "backpack", "lantern"}, {"blender", "skillet", "kettle"},
    {"headphones", "speaker", "tablet"}, {"jacket", "sneakers", "scarf"},
    {"lamp", "rug", "vase"}};

std::vector<FeatureDef> feature_defs() {
  using K = FeatureKind;
  return {
      {"f00_category", "Product category", K::categorical,
       {"Outdoor", "Kitchen", "Electronics", "Fashion", "Home decor"},
       {{"hiking", "camping", "trail"},
        {"cooking", "baking", "recipes"},
        {"gadgets", "laptop", "charger"},
        {"outfit", "jacket", "sneakers"},
        {"cushions", "lamps", "rugs"}},
       {"shopping", "looking for"},
       {"i am {kw} stuff for {cue}", "been {kw} something around {cue}", "{kw} gear for {cue}"},
       "Which kind of product fits \"{tokens}\"?", true},
      {"f01_style", "Preferred style", K::categorical,
       {"Minimalist", "Rugged", "Luxury", "Playful"},
       {{"simple", "clean", "sleek"},
        {"durable", "tough", "sturdy"},
        {"fancy", "elegant", "premium"},
        {"colorful", "quirky", "fun"}},
       {"style", "aesthetic"},
       {"my {kw} is pretty {cue}", "i like a {cue} {kw}", "{cue} {kw} suits me"},
       "Which style matches \"{tokens}\"?", true},
      {"f02_budget", "Budget", K::categorical,
       {"Economy", "Midrange", "Premium", "Splurge"},
       {{"cheap", "bargain", "thrifty"},
        {"moderate", "reasonable", "sensible"},
        {"pricey", "upscale", "investment"},
        {"lavish", "extravagant", "unlimited"}},
       {"budget", "spend"},
       {"my {kw} is {cue}", "i want to {kw} something {cue}", "keeping the {kw} {cue}"},
       "What budget fits \"{tokens}\"?", true},
      {"f03_sentiment", "Sentiment", K::categorical,
       {"Excited and motivated", "Curious", "Concerned", "Frustrated"},
       {{"thrilled", "pumped", "stoked"},
        {"wondering", "intrigued", "puzzled"},
        {"worried", "nervous", "uneasy"},
        {"annoyed", "irritated", "grumpy"}},
       {"feel", "feeling"},
       {"i {kw} {cue} about it", "honestly {kw} {cue} today", "{kw} kind of {cue}"},
       "How does the author feel in \"{tokens}\"?"},
      {"f04_urgency", "Urgency", K::categorical,
       {"Right now", "This week", "This month", "Just browsing"},
       {{"tonight", "immediately", "asap"},
        {"weekend", "soon", "shortly"},
        {"eventually", "later", "upcoming"},
        {"browsing", "dreaming", "pondering"}},
       {"timing", "when"},
       {"{kw} wise {cue}", "the {kw} is {cue}", "{cue} is the {kw}"},
       "How soon is \"{tokens}\" needed?"},
      {"f05_intent", "Purchase intent", K::binary,
       {"Yes", "No"},
       {{"ready", "definitely", "ordering"}, {"maybe", "someday", "undecided"}},
       {"buy", "purchase"},
       {"{cue} going to {kw}", "will {kw} {cue}", "{kw} plan is {cue}"},
       "Is the author planning to buy (\"{tokens}\")?"},
      {"f06_gift", "Gift", K::binary,
       {"Yes", "No"},
       {{"birthday", "anniversary", "sister"}, {"myself", "personally", "mine"}},
       {"gift", "present"},
       {"a {kw} for {cue}", "{kw} idea {cue}", "{cue} {kw} shopping"},
       "Is \"{tokens}\" about a gift?"},
      {"f07_experience", "Experience level", K::categorical,
       {"Beginner", "Intermediate", "Advanced", "Professional"},
       {{"newbie", "starting", "novice"},
        {"decent", "improving", "amateur"},
        {"seasoned", "skilled", "veteran"},
        {"expert", "pro", "career"}},
       {"experience", "skill"},
       {"my {kw} is {cue}", "{cue} level of {kw}", "{kw} wise i am {cue}"},
       "What experience level shows in \"{tokens}\"?"},
      {"f08_household", "Household", K::categorical,
       {"Single", "Couple", "Family with kids", "Roommates"},
       {{"alone", "solo", "bachelor"},
        {"partner", "spouse", "girlfriend"},
        {"kids", "children", "toddler"},
        {"roommates", "flatmates", "housemates"}},
       {"household", "home"},
       {"{kw} is me and {cue}", "my {kw} {cue}", "{cue} at {kw}"},
       "Who lives in the author's household (\"{tokens}\")?"},
      {"f09_hobby", "Hobby", K::free_text,
       {},
       {{"painting", "gaming", "gardening", "running", "reading", "knitting", "fishing", "climbing"}},
       {"hobby", "hobbies"},
       {"my {kw} is {cue}", "{kw} lately {cue}", "big on {cue} as a {kw}"},
       "Which hobby comes up in \"{tokens}\"? (one word)"},
      {"f10_season", "Season", K::categorical,
       {"Spring", "Summer", "Fall", "Winter"},
       {{"blossom", "rainy", "april"},
        {"sunny", "beach", "july"},
        {"autumn", "leaves", "october"},
        {"snowy", "freezing", "december"}},
       {"season", "weather"},
       {"the {kw} is {cue}", "{cue} {kw} coming", "for {cue} {kw}"},
       "Which season is \"{tokens}\" about?"},
      {"f11_loyalty", "Brand loyal", K::binary,
       {"Yes", "No"},
       {{"loyal", "favorite", "trusted"}, {"generic", "whichever", "unbranded"}},
       {"brand", "brands"},
       {"{cue} {kw} only", "about {kw} i go {cue}", "{kw} {cue}"},
       "Does the author stick to a brand (\"{tokens}\")?"},
      {"f12_item", "Desired item", K::free_text,
       {},
       kProductNouns,
       {"item", "thing"},
       {"the {kw} i want is a {cue}", "one {kw} {cue}", "{cue} is the {kw}"},
       "Which item is wanted in \"{tokens}\"? (one word)"},
      {"f13_channel", "Shopping channel", K::categorical,
       {"Online", "In store", "Marketplace app", "Social media"},
       {{"website", "shipping", "cart"},
        {"mall", "boutique", "aisle"},
        {"app", "marketplace", "listing"},
        {"instagram", "tiktok", "influencer"}},
       {"delivery", "pickup"},
       {"{kw} via {cue}", "{cue} for {kw}", "prefer {cue} {kw}"},
       "Where would \"{tokens}\" be bought?"},
      {"f14_comparison", "Comparison shopping", K::binary,
       {"Yes", "No"},
       {{"reviews", "versus", "alternatives"}, {"quickly", "straightforward", "decided"}},
       {"compare", "options"},
       {"{kw} {cue}", "{cue} with {kw}", "want to {kw} {cue}"},
       "Is the author comparing options (\"{tokens}\")?"},
      {"f15_eco", "Eco conscious", K::binary,
       {"Yes", "No"},
       {{"recycled", "organic", "green"}, {"disposable", "conventional", "plastic"}},
       {"sustainable", "eco"},
       {"{kw} matters {cue}", "{cue} {kw} stuff", "{kw} angle {cue}"},
       "Does sustainability matter in \"{tokens}\"?"},
  };
}


const std::vector<std::string> kGreetings = {"hi", "hello there", "thanks", "hey", "good morning", "ok thanks"};
const std::vector<std::string> kOpeners = {"so", "honestly", "well", "anyway", "also", "hmm"};
const std::vector<std::string> kJoiners = {", ", " and ", ". "};

std::string fill(std::string tpl, const std::string& kw, const std::string& cue) {
  for (const auto& [slot, value] : {std::pair{std::string("{kw}"), kw}, std::pair{std::string("{cue}"), cue}}) {
    for (auto p = tpl.find(slot); p != std::string::npos; p = tpl.find(slot, p + value.size()))
      tpl.replace(p, slot.size(), value);
  }
  return tpl;
}

std::size_t latent_class(const SimAuthor& a, std::size_t i) { return a.latent_values.at(i).class_index(); }

const std::string& latent_text(const SimAuthor& a, std::size_t i) {
  return std::get<core::FreeText>(a.latent_values.at(i).value).text;
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::string perturb(std::string word, core::Rng& rng) {
  if (word.empty()) return "x";
  const auto pos = rng.below(word.size());
  char c = static_cast<char>('a' + rng.below(26));
  if (c == word[pos]) c = c == 'z' ? 'a' : static_cast<char>(c + 1);
  word[pos] = c;
  return word;
}

}  // namespace

World default_world(const WorldConfig& cfg) {
  World w;
  for (auto& d : feature_defs()) {
    SimFeature f;
    f.spec.feature_id = d.id;
    f.spec.name = d.name;
    f.spec.kind = d.kind;
    f.spec.label_space = d.labels;
    f.spec.relevance_keywords = d.keywords;
    f.spec.description = d.name;
    f.spec.question_template = d.question;
    f.product_attribute = d.product;
    f.templates = d.templates;
    if (d.kind == FeatureKind::free_text) {
      for (const auto& group : d.cues) f.free_text_values.insert(f.free_text_values.end(), group.begin(), group.end());
      // Several answer groups: the answer depends on the author's category.
      if (d.cues.size() > 1) {
        f.parent = 0;
        f.values_by_parent_label = d.cues;
      }
    } else {
      f.cues = d.cues;
    }
    w.registry.add(f.spec);
    w.features.push_back(std::move(f));
  }

  // Every category x style x budget combination once, then random repeats.
  auto rng = core::Rng::substream(core::RngSeed{cfg.seed}, "catalog");
  const auto& cat = w.features[0];
  const auto& style = w.features[1];
  const auto& budget = w.features[2];
  std::vector<std::array<std::size_t, 3>> combos;
  for (std::size_t c = 0; c < cat.cues.size(); ++c)
    for (std::size_t s = 0; s < style.cues.size(); ++s)
      for (std::size_t b = 0; b < budget.cues.size(); ++b) combos.push_back({c, s, b});
  rng.shuffle(combos);
  while (combos.size() < cfg.products)
    combos.push_back({rng.below(cat.cues.size()), rng.below(style.cues.size()), rng.below(budget.cues.size())});
  combos.resize(std::min(combos.size(), cfg.products));

  std::vector<recommend::Product> products;
  for (std::size_t i = 0; i < combos.size(); ++i) {
    const auto [c, s, b] = combos[i];
    recommend::Product p;
    char id[32];
    std::snprintf(id, sizeof id, "p%03zu", i);
    p.product_id = id;
    p.vertical = cat.spec.label_space[c];
    auto noun = rng.pick(kProductNouns[c]);
    p.title = style.spec.label_space[s] + " " + noun;
    noun[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(noun[0])));
    p.title = style.spec.label_space[s] + " " + noun;
    p.attribute_text =
        cat.spec.label_space[c] + " " + style.spec.label_space[s] + " " + budget.spec.label_space[b];
    // Catalog-side vocabulary: the noun and the attribute names, which is
    // what a keyword matcher has to work with.
    p.keywords = core::tokenize(cat.spec.label_space[c] + " " + style.spec.label_space[s]);
    p.keywords.insert(p.keywords.begin(), core::tokenize(noun).front());
    products.push_back(std::move(p));
  }
  w.catalog = recommend::Catalog(std::move(products), cfg.dim);
  return w;
}

SimAuthor make_author(const World& world, std::string author_id, core::Rng& rng,
                      const AuthorDefaults& defaults) {
  SimAuthor a;
  a.author_id = std::move(author_id);
  a.label_noise = defaults.label_noise;
  a.abstain_prob = defaults.abstain_prob;
  a.completion_prob = defaults.completion_prob;
  a.click_model = defaults.click_model;
  for (const auto* p : {&a.label_noise, &a.abstain_prob, &a.completion_prob})
    if (!(*p >= 0.0 && *p <= 1.0)) throw std::invalid_argument("author probabilities must lie in [0, 1]");
  std::string pref;
  for (const auto& f : world.features) {
    switch (f.spec.kind) {
      case FeatureKind::binary:
        a.latent_values.push_back(FeatureValue::binary(rng.bernoulli(0.5)));
        break;
      case FeatureKind::categorical: {
        const auto c = rng.below(f.spec.label_space.size());
        a.latent_values.push_back(FeatureValue::categorical(c));
        if (f.product_attribute) pref += (pref.empty() ? "" : " ") + f.spec.label_space[c];
        break;
      }
      case FeatureKind::free_text: {
        const auto& t = f.parent < a.latent_values.size()
                            ? rng.pick(f.values_by_parent_label.at(a.latent_values[f.parent].class_index()))
                            : rng.pick(f.free_text_values);
        a.latent_values.push_back(FeatureValue::free_text(t, {}));
        break;
      }
    }
  }
  a.preference = core::featurize(pref, world.catalog.empty() ? core::kDefaultFeatureDim
                                                             : world.catalog.products().front().attribute_embedding.dim);
  return a;
}

GeneratedMessage gen_message(const World& world, const SimAuthor& author, core::Rng& rng,
                             const MessageOptions& opts) {
  for (const auto& f : world.features)
    if (f.templates.empty() || f.spec.relevance_keywords.empty())
      throw std::invalid_argument("feature " + f.spec.feature_id + " has an empty template bank");
  if (world.features.empty()) throw std::invalid_argument("world has no features");

  GeneratedMessage g;
  if (rng.bernoulli(opts.greeting_prob)) {
    g.text = rng.pick(kGreetings);
    g.greeting = true;
    return g;
  }

  const auto lo = std::min(opts.min_features, world.features.size());
  const auto hi = std::clamp(opts.max_features, lo, world.features.size());
  const auto target = lo + rng.below(hi - lo + 1);

  std::vector<std::size_t> chosen = opts.must_include;
  auto take = [&](std::size_t i) {
    if (chosen.size() < target && std::find(chosen.begin(), chosen.end(), i) == chosen.end()) chosen.push_back(i);
  };
  for (std::size_t i = 0; i < world.features.size(); ++i)
    if (world.features[i].product_attribute && rng.bernoulli(opts.product_mention_prob)) take(i);
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < world.features.size(); ++i)
    if (!world.features[i].product_attribute) rest.push_back(i);
  rng.shuffle(rest);
  for (auto i : rest) take(i);
  for (std::size_t i = 0; i < world.features.size() && chosen.size() < target; ++i) take(i);
  rng.shuffle(chosen);

  std::string text = rng.bernoulli(0.5) ? rng.pick(kOpeners) + " " : "";
  for (std::size_t n = 0; n < chosen.size(); ++n) {
    const auto i = chosen[n];
    const auto& f = world.features[i];
    std::string cue;
    if (f.spec.kind == FeatureKind::free_text) {
      cue = rng.bernoulli(opts.cue_noise) ? rng.pick(f.free_text_values) : latent_text(author, i);
    } else {
      auto c = latent_class(author, i);
      if (rng.bernoulli(opts.cue_noise)) c = (c + 1 + rng.below(f.cues.size() - 1)) % f.cues.size();
      cue = rng.pick(f.cues[c]);
    }
    if (n > 0) text += rng.pick(kJoiners);
    text += fill(rng.pick(f.templates), rng.pick(f.spec.relevance_keywords), cue);
  }
  g.text = text;
  g.mentioned = chosen;
  return g;
}

tasks::AuthorResponse answer_task(const World& world, const SimAuthor& author, const tasks::LabelTask& task,
                                  core::Rng& rng, std::int64_t shown_at) {
  const auto i = world.index_of(task.feature_id);
  const auto& spec = world.registry.at(i);
  tasks::AuthorResponse r;
  r.task_id = task.task_id;
  r.read_latency_s = rng.uniform(5.5, 14.0);
  r.answered_at = shown_at + static_cast<std::int64_t>(r.read_latency_s * 1000.0);
  if (rng.bernoulli(author.abstain_prob)) {
    r.answer = tasks::Abstain{};
    return r;
  }
  const bool noisy = rng.bernoulli(author.label_noise);

  if (task.kind == tasks::TaskKind::free_text) {
    std::string truth = spec.kind == FeatureKind::free_text ? latent_text(author, i)
                                                            : spec.label_space.at(latent_class(author, i));
    r.answer = noisy ? perturb(truth, rng) : truth;
    return r;
  }

  const auto truth = latent_class(author, i);
  std::optional<std::size_t> true_option;
  for (std::size_t o = 0; o < task.option_labels.size(); ++o)
    if (task.option_labels[o] && *task.option_labels[o] == truth) true_option = o;
  // The true value was not among the options: nothing fits, so abstain.
  if (!true_option) {
    r.answer = tasks::Abstain{};
    return r;
  }
  if (!noisy || task.options.size() < 2) {
    r.answer = *true_option;
  } else {
    auto o = rng.below(task.options.size() - 1);
    if (o >= *true_option) ++o;
    r.answer = o;
  }
  return r;
}

double click_probability(const SimAuthor& author, const recommend::Product& product,
                         std::size_t prior_impressions) {
  const auto& m = author.click_model;
  const double affinity = core::cosine_similarity(author.preference, product.attribute_embedding);
  const double novelty = m.novelty_amplitude == 0.0
                             ? 0.0
                             : m.novelty_amplitude * std::exp(-static_cast<double>(prior_impressions) /
                                                              std::max(m.novelty_decay, 1e-12));
  return logistic(m.base_logit + m.affinity_weight * affinity + novelty);
}

bool click_decision(SimAuthor& author, recommend::Source source, const recommend::Product& product,
                    core::Rng& rng) {
  auto& seen = author.impressions_seen[source];
  const double p = click_probability(author, product, seen);
  ++seen;
  return rng.bernoulli(p);
}

std::optional<double> RunArtifacts::source_ctr(recommend::Source s) const {
  const auto* row = ctr.find("source=" + std::string(recommend::to_string(s)));
  return row ? row->ctr : std::nullopt;
}

namespace {

std::string curve_csv(const std::vector<CurvePoint>& points, const char* value_name) {
  std::string out = std::string("session,feature_id,") + value_name + "\n";
  char buf[64];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.6f", p.value);
    out += std::to_string(p.session) + "," + p.feature_id + "," + buf + "\n";
  }
  return out;
}

double mean_at(const std::vector<CurvePoint>& points, std::size_t session) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : points)
    if (p.session == session) {
      sum += p.value;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

std::string RunArtifacts::learning_curves_csv() const { return curve_csv(learning_curves, "accuracy"); }
std::string RunArtifacts::sigma_csv() const { return curve_csv(sigma, "sigma"); }

double RunArtifacts::initial_accuracy() const {
  return learning_curves.empty() ? 0.0 : mean_at(learning_curves, learning_curves.front().session);
}
double RunArtifacts::final_accuracy() const {
  return learning_curves.empty() ? 0.0 : mean_at(learning_curves, learning_curves.back().session);
}

std::vector<double> heldout_accuracy(const World& world, const features::Ensemble& models,
                                     const std::vector<SimAuthor>& authors,
                                     const std::vector<GeneratedMessage>& messages,
                                     const std::vector<std::size_t>& author_of,
                                     const std::vector<std::size_t>& feature_of) {
  std::vector<double> hits(world.features.size(), 0.0);
  std::vector<double> counts(world.features.size(), 0.0);
  for (std::size_t m = 0; m < messages.size(); ++m) {
    const auto i = feature_of[m];
    const auto& author = authors[author_of[m]];
    const auto x = core::featurize(messages[m].text, models.config().input_dim);
    const auto v = models.predict(world.registry, i, messages[m].text, x);
    counts[i] += 1.0;
    if (v.abstain) continue;
    if (world.features[i].spec.kind == FeatureKind::free_text) {
      if (std::get<core::FreeText>(v.value).text == latent_text(author, i)) hits[i] += 1.0;
    } else if (v.class_index() == latent_class(author, i)) {
      hits[i] += 1.0;
    }
  }
  for (std::size_t i = 0; i < hits.size(); ++i) hits[i] = counts[i] > 0 ? hits[i] / counts[i] : 0.0;
  return hits;
}

RunArtifacts run_experiment(const SimScenario& scenario) {
  std::optional<Engine> engine;
  return run_experiment(scenario, engine);
}

RunArtifacts run_experiment(const SimScenario& sc, std::optional<Engine>& engine_out) {
  if (sc.min_messages == 0 || sc.max_messages < sc.min_messages)
    throw std::invalid_argument("scenario needs 1 <= min_messages <= max_messages");
  if (sc.weekday_factors.size() != 7) throw std::invalid_argument("weekday_factors needs 7 entries");
  const core::RngSeed seed{sc.seed};
  const World world = default_world({sc.seed, sc.products, sc.engine.model.input_dim});

  EngineConfig ecfg = sc.engine;
  ecfg.seed = sc.seed;
  ecfg.echo_arm = sc.arms != Arms::baseline;
  ecfg.baseline_arm = sc.arms != Arms::echo;
  engine_out.emplace(world.registry, world.catalog, ecfg);
  Engine& engine = *engine_out;
  if (sc.audit) engine.enable_audit();

  std::vector<SimAuthor> authors;
  std::vector<core::Rng> behavior;
  for (std::size_t a = 0; a < sc.authors; ++a) {
    auto rng = core::Rng::substream(seed, "author", a);
    char id[32];
    std::snprintf(id, sizeof id, "u%03zu", a);
    authors.push_back(make_author(world, id, rng, sc.author));
    behavior.push_back(core::Rng::substream(seed, "behavior", a));
  }

  // Held-out probe set from separate authors.
  std::vector<SimAuthor> probe_authors;
  std::vector<GeneratedMessage> probes;
  std::vector<std::size_t> probe_author, probe_feature;
  {
    auto rng = core::Rng::substream(seed, "heldout");
    for (std::size_t a = 0; a < 50; ++a)
      probe_authors.push_back(make_author(world, "h" + std::to_string(a), rng, sc.author));
    if (sc.heldout_per_feature > 0) {
      for (std::size_t i = 0; i < world.features.size(); ++i)
        for (std::size_t n = 0; n < sc.heldout_per_feature; ++n) {
          const auto a = rng.below(probe_authors.size());
          auto opts = sc.message;
          opts.greeting_prob = 0.0;
          opts.must_include = {i};
          probes.push_back(gen_message(world, probe_authors[a], rng, opts));
          probe_author.push_back(a);
          probe_feature.push_back(i);
        }
    }
  }

  RunArtifacts run;
  auto checkpoint = [&](std::size_t session) {
    if (!probes.empty()) {
      const auto acc = heldout_accuracy(world, engine.models(), probe_authors, probes, probe_author, probe_feature);
      for (std::size_t i = 0; i < acc.size(); ++i)
        run.learning_curves.push_back({session, world.registry.at(i).feature_id, acc[i]});
    }
    for (std::size_t i = 0; i < world.registry.size(); ++i)
      run.sigma.push_back({session, world.registry.at(i).feature_id, engine.selector().sigma(i)});
  };

  constexpr std::int64_t kDay = 86'400'000;
  constexpr std::int64_t kEpoch = 1'767'225'600'000;  // 2026-01-01T00:00:00Z
  auto schedule = core::Rng::substream(seed, "schedule");

  if (sc.authors > 0) checkpoint(0);
  for (std::size_t s = 0; s < sc.sessions && sc.authors > 0; ++s) {
    const auto a = schedule.below(sc.authors);
    auto& author = authors[a];
    auto& rng = behavior[a];
    const bool comparison = s >= sc.warmup_sessions;
    const auto day = static_cast<std::int64_t>(s * std::max<std::size_t>(sc.days, 1) / sc.sessions);
    std::int64_t t = kEpoch + day * kDay + 8 * 3'600'000 + static_cast<std::int64_t>(schedule.below(12 * 3'600'000));
    char sid[32];
    std::snprintf(sid, sizeof sid, "s%05zu", s);
    const std::string session_id = sid;

    const auto n_msgs = sc.min_messages + rng.below(sc.max_messages - sc.min_messages + 1);
    for (std::size_t turn = 0; turn < n_msgs; ++turn) {
      const auto g = gen_message(world, author, rng, sc.message);
      core::Message m{session_id, author.author_id, turn, core::AuthorRole::user, g.text, t};
      const auto res = engine.on_message(m, comparison);
      std::int64_t busy_until = t;

      if (res.survey) {
        ++run.surveys_shown;
        const auto& tasks = res.survey->tasks;
        const auto answered = rng.bernoulli(author.completion_prob) ? tasks.size() : rng.below(tasks.size());
        std::int64_t shown = t;
        for (std::size_t q = 0; q < answered; ++q) {
          const auto r = answer_task(world, author, tasks[q], rng, shown);
          const auto outcome = engine.on_response(session_id, r);
          if (outcome.accepted && !outcome.abstained) ++run.labels;
          shown = r.answered_at;
        }
        busy_until = shown;
      }

      const auto weekday_factor = sc.weekday_factors[static_cast<std::size_t>(((day + 4) % 7 + 7) % 7)];
      for (const auto* shown : {&res.echo, &res.baseline}) {
        if (!*shown || !(*shown)->new_impression) continue;
        const auto* product = world.catalog.find((*shown)->product_id);
        auto& seen = author.impressions_seen[(*shown)->source];
        const double p = std::min(1.0, click_probability(author, *product, seen) * weekday_factor);
        ++seen;
        if (!rng.bernoulli(p)) continue;
        auto at = busy_until + static_cast<std::int64_t>(rng.uniform(1.0, 6.0) * 1000.0);
        engine.on_click(session_id, (*shown)->impression_id, at);
        while (rng.bernoulli(sc.repeat_click_prob)) {
          at += static_cast<std::int64_t>(rng.uniform(0.5, 3.0) * 1000.0);
          engine.on_click(session_id, (*shown)->impression_id, at);
        }
      }

      const bool rapid = rng.bernoulli(sc.rapid_message_prob);
      t = busy_until + static_cast<std::int64_t>((rapid ? rng.uniform(2.0, 9.0) : rng.uniform(20.0, 120.0)) * 1000.0);
    }
    if (sc.checkpoint_every > 0 && (s + 1) % sc.checkpoint_every == 0 && s + 1 != sc.sessions) checkpoint(s + 1);
  }
  if (sc.authors > 0 && sc.sessions > 0) checkpoint(sc.sessions);

  run.log = engine.log();
  run.ctr = recommend::ctr_report(engine.ledger().impressions());
  run.completion_rate = tasks::completion_rate(engine.log());
  run.audit = engine.audit();
  run.engine_checksum = engine.checksum();
  return run;
}

void write_run(const RunArtifacts& run, const SimScenario& scenario, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const World world = default_world({scenario.seed, scenario.products, scenario.engine.model.input_dim});
  EngineConfig ecfg = scenario.engine;
  ecfg.seed = scenario.seed;
  ecfg.echo_arm = scenario.arms != Arms::baseline;
  ecfg.baseline_arm = scenario.arms != Arms::echo;
  config::write_file(dir / "events.jsonl", run.log.to_jsonl());
  config::write_file(dir / "ctr.csv", run.ctr.to_csv());
  config::write_file(dir / "learning_curves.csv", run.learning_curves_csv());
  config::write_file(dir / "sigma.csv", run.sigma_csv());
  config::write_file(dir / "registry.jsonl", config::registry_to_jsonl(world.registry));
  config::write_file(dir / "catalog.jsonl", world.catalog.to_jsonl());
  config::write_file(dir / "engine.conf", config::render_engine_config(ecfg));
}

}  // namespace echo::sim
