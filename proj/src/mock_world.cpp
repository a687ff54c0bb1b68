#include "kvqa/mock_world.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "kvqa/errors.hpp"
#include "kvqa/hashing.hpp"

namespace kvqa {

namespace {

constexpr int kWorldVersion = 1;
constexpr double kObjectWeight = 0.35;

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    return lines;
}

void add_scaled(Embedding& acc, const Embedding& v, double scale) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * v[i];
}

}  // namespace

std::string knowledge_question_text(const MockRelation& relation, const std::string& subject) {
    return "What is the " + relation.label + " of " + subject + "?";
}

std::string knowledge_statement(const MockRelation& relation, const std::string& subject, const std::string& object) {
    return "The " + relation.label + " of " + subject + " is " + object;
}

// ---------------------------------------------------------------------------
// MockWorld

const MockRelation* MockWorld::find_relation(const std::string& name) const {
    for (const auto& r : relations) {
        if (r.name == name) return &r;
    }
    return nullptr;
}

const MockSubject* MockWorld::find_subject(const std::string& name) const {
    for (const auto& s : subjects) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

void MockWorld::validate() const {
    if (embedding_dim == 0) throw DomainError("mock world: embedding_dim must be positive");
    if (!(knowledge_noise >= 0.0 && knowledge_noise <= 1.0)) throw DomainError("mock world: noise outside [0,1]");
    if (!(extra_point_rate >= 0.0 && extra_point_rate <= 1.0)) {
        throw DomainError("mock world: extra_point_rate outside [0,1]");
    }
    std::set<std::string> seen;
    for (const auto& r : relations) {
        if (r.name.empty() || r.label.empty() || r.question.empty()) throw DomainError("mock world: incomplete relation");
        if (!seen.insert("r:" + r.name).second) throw DomainError("mock world: duplicate relation " + r.name);
    }
    for (const auto& s : subjects) {
        if (s.name.empty() || s.image_ref.empty() || s.scene.empty()) throw DomainError("mock world: incomplete subject");
        if (!seen.insert("s:" + s.name).second || !seen.insert("i:" + s.image_ref).second ||
            !seen.insert("c:" + s.scene).second) {
            throw DomainError("mock world: duplicate subject, image or scene for " + s.name);
        }
    }
    for (const auto& [key, object] : fact_table) {
        if (!find_subject(key.first) || !find_relation(key.second)) {
            throw DomainError("mock world: fact references unknown subject/relation " + key.first + "/" + key.second);
        }
        if (object.empty() || object.find_first_of(".;\n") != std::string::npos) {
            throw DomainError("mock world: invalid object text '" + object + "'");
        }
    }
    for (const auto& key : vlm_known_facts) {
        if (!fact_table.contains(key)) {
            throw DomainError("mock world: known fact " + key.first + "/" + key.second + " is not in the fact table");
        }
    }
}

nlohmann::json to_json(const MockWorld& world) {
    nlohmann::json j;
    j["format"] = "kvqa-mock-world";
    j["version"] = kWorldVersion;
    j["seed"] = world.seed;
    j["embedding_dim"] = world.embedding_dim;
    j["knowledge_noise"] = world.knowledge_noise;
    j["extra_point_rate"] = world.extra_point_rate;
    auto& rels = j["relations"] = nlohmann::json::array();
    for (const auto& r : world.relations) rels.push_back({{"name", r.name}, {"label", r.label}, {"question", r.question}});
    auto& subs = j["subjects"] = nlohmann::json::array();
    for (const auto& s : world.subjects) {
        subs.push_back({{"name", s.name}, {"image_ref", s.image_ref}, {"scene", s.scene}});
    }
    auto& facts = j["facts"] = nlohmann::json::array();
    for (const auto& [key, object] : world.fact_table) {
        facts.push_back({{"subject", key.first},
                         {"relation", key.second},
                         {"object", object},
                         {"vlm_known", world.vlm_known_facts.contains(key)}});
    }
    return j;
}

MockWorld mock_world_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "kvqa-mock-world") throw FormatError("not a mock world file");
        if (j.at("version").get<int>() != kWorldVersion) {
            throw FormatError("unsupported mock world version " + j.at("version").dump());
        }
        MockWorld w;
        w.seed = j.at("seed").get<std::uint64_t>();
        w.embedding_dim = j.at("embedding_dim").get<std::size_t>();
        w.knowledge_noise = j.at("knowledge_noise").get<double>();
        w.extra_point_rate = j.value("extra_point_rate", 0.25);
        for (const auto& r : j.at("relations")) {
            w.relations.push_back({r.at("name"), r.at("label"), r.at("question")});
        }
        for (const auto& s : j.at("subjects")) {
            w.subjects.push_back({s.at("name"), s.at("image_ref"), s.at("scene")});
        }
        for (const auto& f : j.at("facts")) {
            FactKey key{f.at("subject"), f.at("relation")};
            w.fact_table[key] = f.at("object").get<std::string>();
            if (f.value("vlm_known", false)) w.vlm_known_facts.insert(key);
        }
        w.validate();
        return w;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed mock world: ") + e.what());
    }
}

MockWorld load_mock_world(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read mock world " + path.string());
    try {
        return mock_world_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("mock world " + path.string() + ": " + e.what());
    }
}

void save_mock_world(const MockWorld& world, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << to_json(world).dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// MockBackend

MockBackend::MockBackend(MockWorld world) : world_(std::move(world)) {
    world_.validate();
    for (const auto& s : world_.subjects) {
        by_ref_[s.image_ref] = &s;
        by_scene_[s.scene] = &s;
        by_name_[s.name] = &s;
    }
    for (const auto& r : world_.relations) relations_by_question_length_.push_back(&r);
    std::stable_sort(relations_by_question_length_.begin(), relations_by_question_length_.end(),
                     [](const MockRelation* a, const MockRelation* b) { return a->question.size() > b->question.size(); });
    std::set<std::string> objects;
    for (const auto& [key, object] : world_.fact_table) objects.insert(object);
    vocabulary_.assign(objects.begin(), objects.end());
    if (vocabulary_.size() < 2) throw DomainError("mock world needs at least two distinct objects");
}

const MockSubject& MockBackend::subject_for_ref(const std::string& image_ref) const {
    if (image_ref.empty()) throw BackendError("mock: empty image reference");
    auto it = by_ref_.find(image_ref);
    if (it == by_ref_.end()) throw BackendError("mock: unknown image reference '" + image_ref + "'");
    return *it->second;
}

const MockRelation* MockBackend::relation_in_text(const std::string& text) const {
    for (const MockRelation* r : relations_by_question_length_) {
        if (text.find(r->question) != std::string::npos) return r;
    }
    return nullptr;
}

std::string MockBackend::pick_object(std::uint64_t key, const std::string& avoid) const {
    std::size_t idx = static_cast<std::size_t>(key % vocabulary_.size());
    if (vocabulary_[idx] == avoid) idx = (idx + 1) % vocabulary_.size();
    return vocabulary_[idx];
}

Embedding MockBackend::token_vector(const std::string& token) const {
    const std::uint64_t h = hash_combine(world_.seed, token);
    Embedding v(world_.embedding_dim);
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = 2.0 * unit_interval(splitmix64(h + j)) - 1.0;
    return v;
}

Embedding MockBackend::bag_of_words(const std::string& text, bool allow_empty) const {
    Embedding acc(world_.embedding_dim, 0.0);
    const auto tokens = tokenize(text);
    if (tokens.empty()) {
        if (allow_empty) return acc;
        throw BackendError("mock: text has no tokens");
    }
    for (const auto& tok : tokens) add_scaled(acc, token_vector("w:" + tok), 1.0);
    normalize_in_place(acc);
    return acc;
}

ScoredAnswer MockBackend::vlm_answer(const std::string& image_ref, const std::string& prompt,
                                     const GenerationParams& params) {
    const MockSubject& subject = subject_for_ref(image_ref);
    const MockRelation* relation = relation_in_text(prompt);
    const std::uint64_t prompt_key = hash_combine(hash_combine(world_.seed, "guess"), prompt);

    std::string truth;
    std::string text;
    double confidence = kGuessConfidence;
    if (relation) {
        const FactKey key{subject.name, relation->name};
        if (auto it = world_.fact_table.find(key); it != world_.fact_table.end()) {
            truth = it->second;
            const std::string prefix = "The " + relation->label + " of " + subject.name + " is ";
            if (const auto pos = prompt.find(prefix); pos != std::string::npos) {
                const auto start = pos + prefix.size();
                const auto end = prompt.find_first_of(".\n", start);
                text = trim(std::string_view(prompt).substr(start, end == std::string::npos ? end : end - start));
                confidence = kPromptedConfidence;
            } else if (world_.vlm_known_facts.contains(key)) {
                text = truth;
                confidence = kKnownConfidence;
            }
        }
    }
    if (text.empty()) {
        text = pick_object(prompt_key, truth);
        confidence = kGuessConfidence;
    }

    if (!params.options.empty()) {
        // Options are rendered as "Options: (a) x; (b) y; ... (d) z."
        std::vector<std::string> option_texts(params.options.size());
        const auto opts = prompt.rfind("Options:");
        if (opts != std::string::npos) {
            for (std::size_t i = 0; i < params.options.size(); ++i) {
                const std::string marker = "(" + params.options[i] + ") ";
                const auto at = prompt.find(marker, opts);
                if (at == std::string::npos) continue;
                const auto start = at + marker.size();
                const auto end = prompt.find_first_of(";.\n", start);
                option_texts[i] = trim(std::string_view(prompt).substr(start, end == std::string::npos ? end : end - start));
            }
        }
        const AnswerKey wanted = normalize_answer(text);
        const AnswerKey correct = normalize_answer(truth);
        std::string letter;
        std::vector<std::size_t> wrong;
        for (std::size_t i = 0; i < option_texts.size(); ++i) {
            const AnswerKey k = normalize_answer(option_texts[i]);
            if (letter.empty() && !k.empty() && k == wanted) letter = params.options[i];
            if (k != correct || correct.empty()) wrong.push_back(i);
        }
        if (letter.empty()) {
            letter = wrong.empty() ? params.options.front()
                                   : params.options[wrong[static_cast<std::size_t>(prompt_key % wrong.size())]];
        }
        text = letter;
    }
    return ScoredAnswer::with_confidence(std::move(text), confidence);
}

std::string MockBackend::vlm_caption(const std::string& image_ref) { return subject_for_ref(image_ref).scene; }

Embedding MockBackend::vlm_encode(const std::string& image_ref, const std::string& question) {
    if (image_ref.empty()) throw BackendError("mock: empty image reference");
    Embedding e = bag_of_words(question);
    Embedding ref = token_vector("ref:" + image_ref);
    normalize_in_place(ref);
    add_scaled(e, ref, 1.0);
    normalize_in_place(e);
    return e;
}

Embedding MockBackend::text_embed(const std::string& text) { return bag_of_words(text); }

double MockBackend::image_text_similarity(const std::string& image_ref, const std::string& text) {
    const MockSubject& subject = subject_for_ref(image_ref);
    // The "image" shows its scene and, faintly, the things its facts are about.
    Embedding image = bag_of_words(subject.scene);
    std::string objects;
    for (const auto& [key, object] : world_.fact_table) {
        if (key.first == subject.name) objects += object + " ";
    }
    Embedding facts = bag_of_words(objects, true);
    add_scaled(image, facts, kObjectWeight);
    normalize_in_place(image);
    const Embedding t = bag_of_words(text, true);
    if (l2_norm(t) == 0.0) return 0.0;
    return std::clamp(cosine_similarity(image, t), 0.0, 1.0);
}

EntailmentScores MockBackend::entail_scores(const std::string& premise, const std::string& hypothesis) {
    if (premise == hypothesis) return {1.0, 0.0};
    const auto p_tokens = tokenize(premise);
    const auto h_tokens = tokenize(hypothesis);
    const std::set<std::string> p(p_tokens.begin(), p_tokens.end());
    const std::set<std::string> h(h_tokens.begin(), h_tokens.end());
    if (h.empty()) return {0.0, 0.0};
    std::size_t shared = 0;
    for (const auto& t : h) shared += p.count(t);
    const double overlap = static_cast<double>(shared) / static_cast<double>(h.size());
    const double jitter = unit_interval(hash_combine(hash_combine(world_.seed, premise), hypothesis));
    return {0.9 * overlap, 0.5 * (1.0 - overlap) * jitter};
}

std::string MockBackend::generate(GenerateRole role, const std::string& prompt, const GenerationParams&) {
    return role == GenerateRole::Question ? answer_questions(prompt) : answer_knowledge_query(prompt);
}

// Question model: one knowledge question per demonstration. A demonstration
// whose question asks the same thing as the current one teaches the right
// knowledge question; any other demonstration is imitated superficially and
// yields a question about the demonstration's own relation.
std::string MockBackend::answer_questions(const std::string& prompt) const {
    std::vector<std::pair<std::string, std::string>> blocks;
    std::string caption;
    for (const auto& raw : lines_of(prompt)) {
        const std::string line = trim(raw);
        if (line.starts_with("Context:")) caption = trim(std::string_view(line).substr(8));
        if (line.starts_with("Question:")) blocks.emplace_back(caption, trim(std::string_view(line).substr(9)));
    }
    if (blocks.empty()) return "";
    const auto [current_caption, current_question] = blocks.back();
    blocks.pop_back();
    const auto subject = by_scene_.find(current_caption);
    const MockRelation* wanted = relation_in_text(current_question);
    if (subject == by_scene_.end() || !wanted) return "";

    std::string out;
    std::size_t n = 0;
    for (const auto& [demo_caption, demo_question] : blocks) {
        const MockRelation* shown = relation_in_text(demo_question);
        if (!shown) continue;
        const MockRelation& asked = shown->name == wanted->name ? *wanted : *shown;
        out += std::to_string(++n) + ". " + knowledge_question_text(asked, subject->second->name) + "\n";
    }
    return out;
}

// Knowledge model: answers "What is the {label} of {subject}?" from the fact
// table, corrupting the object with probability knowledge_noise, and sometimes
// appends a bulleted side remark about the subject.
std::string MockBackend::answer_knowledge_query(const std::string& prompt) const {
    std::string out;
    for (const auto& raw : lines_of(prompt)) {
        const std::string line = trim(raw);
        std::size_t digits = 0;
        while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
        if (digits == 0 || digits >= line.size() || line[digits] != '.') continue;
        const std::string number = line.substr(0, digits);
        const std::string question = trim(std::string_view(line).substr(digits + 1));
        const std::uint64_t key = hash_combine(hash_combine(world_.seed, number), question);

        const MockRelation* relation = nullptr;
        const MockSubject* subject = nullptr;
        for (const auto& r : world_.relations) {
            const std::string head = "What is the " + r.label + " of ";
            if (question.starts_with(head) && question.ends_with("?")) {
                const std::string name = question.substr(head.size(), question.size() - head.size() - 1);
                if (auto it = by_name_.find(name); it != by_name_.end()) {
                    relation = &r;
                    subject = it->second;
                    break;
                }
            }
        }
        if (!relation) {
            out += number + ". There is no reliable knowledge about this.\n";
            continue;
        }
        auto fact = world_.fact_table.find({subject->name, relation->name});
        if (fact == world_.fact_table.end()) {
            out += number + ". No widely recorded " + relation->label + " is known for " + subject->name + ".\n";
        } else {
            std::string object = fact->second;
            if (unit_interval(hash_combine(key, "noise")) < world_.knowledge_noise) {
                object = pick_object(hash_combine(key, "corrupt"), object);
            }
            out += number + ". " + knowledge_statement(*relation, subject->name, object) + ".\n";
        }
        if (unit_interval(hash_combine(key, "extra")) < world_.extra_point_rate) {
            out += "- " + capitalize(subject->name) + " often appears in scenes like " + subject->scene + ".\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

const std::vector<MockRelation>& relation_catalog() {
    static const std::vector<MockRelation> catalog = {
        {"named_after", "namesake", "Who is this named after?"},
        {"origin_country", "country of origin", "Which country does this come from?"},
        {"invented_year", "year of invention", "In what year was this invented?"},
        {"material", "main material", "What material is this made of?"},
        {"purpose", "typical purpose", "What is this used for?"},
        {"habitat", "natural habitat", "Where would you find this in the wild?"},
        {"inventor", "inventor", "Who invented this?"},
        {"color", "usual color", "What color does this usually have?"},
        {"brand", "best known brand", "Which brand is famous for making this?"},
        {"diet", "usual diet", "What does this animal eat?"},
        {"sport", "associated sport", "Which sport uses this?"},
        {"era", "era of origin", "During which era did this first appear?"},
    };
    return catalog;
}

const std::vector<std::string> kAdjectives = {
    "crimson", "copper", "velvet", "silver", "amber", "striped", "wooden", "glass", "woolen", "marble",
    "rusty", "golden", "painted", "folded", "tiny", "giant", "antique", "plastic", "hollow", "feathered",
    "frosted", "braided", "ceramic", "spotted", "twin", "curved", "patched", "polished", "carved", "woven"};
const std::vector<std::string> kNouns = {
    "kite", "lantern", "kettle", "sled", "drum", "parrot", "bicycle", "teapot", "umbrella", "compass",
    "saddle", "violin", "tortoise", "helmet", "canoe", "clock", "pelican", "skillet", "trumpet", "basket",
    "hammock", "ferret", "scooter", "whistle", "goblet", "banjo", "lobster", "anchor", "tractor", "puffin"};
const std::vector<std::string> kPlaces = {
    "on a wooden table", "in a city park", "beside a river", "on a kitchen shelf", "in a crowded market",
    "under a clear sky", "inside a museum hall", "on a sandy beach", "next to a brick wall", "in a snowy field",
    "on a picnic blanket", "in a workshop"};
const std::vector<std::string> kSyllables = {
    "ka", "lo", "mer", "vin", "tas", "ro", "bel", "dun", "fi", "gar", "hol", "is", "jen",
    "kor", "lum", "nar", "ol", "pes", "quin", "sar", "tor", "ul", "vex", "wen", "zal"};

std::string pseudo_word(SeededRng& rng) {
    std::string w;
    const std::size_t n = 2 + rng.index(2);
    for (std::size_t i = 0; i < n; ++i) w += kSyllables[rng.index(kSyllables.size())];
    return capitalize(w);
}

}  // namespace

MockCorpus generate_mock_world(const MockWorldParams& params) {
    if (params.n_problems < 1 || params.n_facts < params.n_problems) {
        throw DomainError("generate_mock_world: need n_facts >= n_problems >= 1");
    }
    if (!(params.vlm_known_fraction >= 0.0 && params.vlm_known_fraction <= 1.0) ||
        !(params.noise >= 0.0 && params.noise <= 1.0) ||
        !(params.train_fraction >= 0.0 && params.train_fraction <= 1.0)) {
        throw DomainError("generate_mock_world: fractions must lie in [0,1]");
    }
    if (params.embedding_dim == 0) throw DomainError("generate_mock_world: embedding_dim must be positive");

    SeededRng rng(hash_combine(params.seed, "mock-world"));
    MockCorpus corpus;
    MockWorld& world = corpus.world;
    world.seed = params.seed;
    world.embedding_dim = params.embedding_dim;
    world.knowledge_noise = params.noise;
    world.relations = relation_catalog();

    constexpr std::size_t kFactsPerSubject = 3;
    const std::size_t n_subjects = (params.n_facts + kFactsPerSubject - 1) / kFactsPerSubject;
    std::vector<std::string> names;
    for (const auto& a : kAdjectives) {
        for (const auto& n : kNouns) names.push_back(a + " " + n);
    }
    rng.shuffle(names);
    for (std::size_t i = 0; i < n_subjects; ++i) {
        std::string name = names[i % names.size()];
        if (i >= names.size()) name += " mark " + std::to_string(i / names.size() + 1);
        std::string ref = "img:" + name;
        std::replace(ref.begin(), ref.end(), ' ', '_');
        world.subjects.push_back({name, ref, "a " + name + " " + kPlaces[rng.index(kPlaces.size())]});
    }

    const std::size_t vocab_size = std::max<std::size_t>(40, params.n_facts / 2);
    std::set<std::string> seen;
    std::vector<std::string> vocabulary;
    while (vocabulary.size() < vocab_size) {
        std::string object = pseudo_word(rng);
        if (rng.bernoulli(0.5)) object += " " + pseudo_word(rng);
        if (seen.insert(object).second) vocabulary.push_back(object);
    }

    std::vector<FactKey> facts;
    for (const auto& subject : world.subjects) {
        std::vector<std::size_t> rel_idx(world.relations.size());
        for (std::size_t i = 0; i < rel_idx.size(); ++i) rel_idx[i] = i;
        rng.shuffle(rel_idx);
        for (std::size_t k = 0; k < kFactsPerSubject && facts.size() < params.n_facts; ++k) {
            FactKey key{subject.name, world.relations[rel_idx[k]].name};
            world.fact_table[key] = vocabulary[rng.index(vocabulary.size())];
            facts.push_back(key);
        }
    }

    std::vector<std::size_t> order(facts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const auto n_known = static_cast<std::size_t>(std::llround(params.vlm_known_fraction * static_cast<double>(facts.size())));
    for (std::size_t i = 0; i < n_known; ++i) world.vlm_known_facts.insert(facts[order[i]]);

    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(std::llround(params.train_fraction * static_cast<double>(params.n_problems)));
    for (std::size_t i = 0; i < params.n_problems; ++i) {
        const FactKey& key = facts[order[i]];
        const MockSubject& subject = *world.find_subject(key.first);
        const MockRelation& relation = *world.find_relation(key.second);
        const std::string& object = world.fact_table.at(key);

        VqaProblem p;
        std::ostringstream id;
        id << "mw-" << std::setw(5) << std::setfill('0') << i;
        p.id = id.str();
        p.image_ref = subject.image_ref;
        p.question = relation.question;
        p.ground_truth = {object};
        std::vector<std::string> choices = {object};
        while (choices.size() < 4) {
            const std::string& c = vocabulary[rng.index(vocabulary.size())];
            if (std::find_if(choices.begin(), choices.end(), [&](const std::string& x) {
                    return normalize_answer(x) == normalize_answer(c);
                }) == choices.end()) {
                choices.push_back(c);
            }
        }
        rng.shuffle(choices);
        p.choices = std::move(choices);
        p.split = i < n_train ? Split::Train : Split::Val;
        corpus.problems.push_back(std::move(p));
    }

    // Hand-written seeds: training problems with distinct relations first,
    // each asking exactly the knowledge question its answer needs.
    std::vector<const VqaProblem*> picked;
    std::set<std::string> relations_used;
    for (int pass = 0; pass < 2 && picked.size() < params.n_seeds; ++pass) {
        for (const auto& p : corpus.problems) {
            if (picked.size() >= params.n_seeds) break;
            if (p.split != Split::Train) continue;
            if (std::find(picked.begin(), picked.end(), &p) != picked.end()) continue;
            const MockRelation* r = nullptr;
            for (const auto& rel : world.relations) {
                if (rel.question == p.question) r = &rel;
            }
            if (pass == 0 && !relations_used.insert(r->name).second) continue;
            picked.push_back(&p);
        }
    }
    for (const VqaProblem* p : picked) {
        const MockSubject* subject = nullptr;
        for (const auto& s : world.subjects) {
            if (s.image_ref == p->image_ref) subject = &s;
        }
        const MockRelation* relation = nullptr;
        for (const auto& r : world.relations) {
            if (r.question == p->question) relation = &r;
        }
        corpus.seeds.push_back({*p, {knowledge_question_text(*relation, subject->name)}});
    }
    for (std::size_t i = 0; i < std::min(params.n_manual_demos, corpus.seeds.size()); ++i) {
        corpus.manual_demos.push_back(corpus.seeds[i]);
    }
    world.validate();
    return corpus;
}

}  // namespace kvqa
