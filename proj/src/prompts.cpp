#include "tw/prompts.hpp"

#include "tw/hashing.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>

namespace tw {

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
    throw std::runtime_error("prompt batch schema error at " + path + ": " + what);
}

std::string require_string(const nlohmann::json& j, const char* key, const std::string& path) {
    if (!j.contains(key)) schema_error(path + "." + key, "missing");
    const auto& v = j.at(key);
    if (!v.is_string()) schema_error(path + "." + key, "must be a string");
    std::string s = v.get<std::string>();
    if (s.empty()) schema_error(path + "." + key, "must be non-empty");
    return s;
}

}  // namespace

PromptBatch parse_prompt_batch(const std::string& document) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(document);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(std::string("prompt batch is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) schema_error("$", "root must be an object");

    PromptBatch batch;
    batch.meta_prompt_id = require_string(j, "meta_prompt_id", "$");

    if (!j.contains("pairs")) schema_error("pairs", "missing");
    const auto& pairs = j.at("pairs");
    if (!pairs.is_array() || pairs.empty()) schema_error("pairs", "must be a non-empty array");

    std::map<std::string, size_t> seen_ids;
    std::map<std::pair<std::string, std::string>, size_t> seen_texts;
    for (size_t i = 0; i < pairs.size(); ++i) {
        const std::string path = "pairs[" + std::to_string(i) + "]";
        const auto& p = pairs.at(i);
        if (!p.is_object()) schema_error(path, "must be an object");

        PromptPair pair;
        pair.id = require_string(p, "id", path);
        pair.foreground = require_string(p, "foreground", path);
        pair.background = require_string(p, "background", path);
        if (p.contains("tags")) {
            const auto& tags = p.at("tags");
            if (!tags.is_array()) schema_error(path + ".tags", "must be an array");
            for (size_t t = 0; t < tags.size(); ++t) {
                if (!tags.at(t).is_string())
                    schema_error(path + ".tags[" + std::to_string(t) + "]", "must be a string");
                pair.tags.push_back(tags.at(t).get<std::string>());
            }
        }

        if (auto [it, inserted] = seen_ids.emplace(pair.id, i); !inserted) {
            schema_error(path + ".id", "duplicates pairs[" + std::to_string(it->second) + "].id");
        }
        if (auto [it, inserted] = seen_texts.emplace(
                std::make_pair(pair.foreground, pair.background), i);
            !inserted) {
            schema_error(path, "duplicates the prompts of pairs[" + std::to_string(it->second) + "]");
        }
        batch.pairs.push_back(std::move(pair));
    }
    return batch;
}

std::string serialize_prompt_batch(const PromptBatch& batch) {
    nlohmann::json j;
    j["meta_prompt_id"] = batch.meta_prompt_id;
    j["pairs"] = nlohmann::json::array();
    for (const PromptPair& pair : batch.pairs) {
        nlohmann::json p;
        p["id"] = pair.id;
        p["foreground"] = pair.foreground;
        p["background"] = pair.background;
        if (!pair.tags.empty()) p["tags"] = pair.tags;
        j["pairs"].push_back(std::move(p));
    }
    return j.dump(2) + "\n";
}

void PromptPool::add_batch(const PromptBatch& batch) {
    if (batches_.contains(batch.meta_prompt_id)) {
        throw std::invalid_argument("batch '" + batch.meta_prompt_id + "' already in the pool");
    }
    for (const PromptPair& pair : batch.pairs) {
        if (index_.contains(pair.id)) {
            throw std::invalid_argument("prompt id '" + pair.id + "' already in the pool");
        }
    }
    for (const PromptPair& pair : batch.pairs) {
        index_[pair.id] = pairs_.size();
        pairs_.push_back(pair);
        usage_.push_back(0);
    }
    batch_ids_.push_back(batch.meta_prompt_id);
    batches_[batch.meta_prompt_id] = batch.pairs;
}

const PromptPair& PromptPool::sample(uint64_t rng_seed) {
    if (pairs_.empty()) throw std::runtime_error("cannot sample from an empty prompt pool");
    const uint64_t low = *std::min_element(usage_.begin(), usage_.end());
    std::vector<size_t> candidates;
    for (size_t i = 0; i < usage_.size(); ++i) {
        if (usage_[i] == low) candidates.push_back(i);
    }
    const size_t pick = candidates[splitmix64(rng_seed) % candidates.size()];
    ++usage_[pick];
    return pairs_[pick];
}

uint64_t PromptPool::usage(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::invalid_argument("unknown prompt id '" + id + "'");
    return usage_[it->second];
}

uint64_t PromptPool::min_usage() const {
    return usage_.empty() ? 0 : *std::min_element(usage_.begin(), usage_.end());
}

uint64_t PromptPool::max_usage() const {
    return usage_.empty() ? 0 : *std::max_element(usage_.begin(), usage_.end());
}

void PromptPool::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir / "batches");
    for (const auto& [id, pairs] : batches_) {
        PromptBatch batch{id, pairs};
        std::ofstream out(dir / "batches" / (id + ".json"));
        if (!out) throw std::runtime_error("cannot write batch file for '" + id + "'");
        out << serialize_prompt_batch(batch);
    }
    nlohmann::json usage;
    for (size_t i = 0; i < pairs_.size(); ++i) usage[pairs_[i].id] = usage_[i];
    std::ofstream out(dir / "usage.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "usage.json").string());
    out << usage.dump(2) << "\n";
}

PromptPool PromptPool::load(const std::filesystem::path& dir) {
    PromptPool pool;
    std::vector<std::filesystem::path> files;
    const auto batches_dir = dir / "batches";
    if (std::filesystem::is_directory(batches_dir)) {
        for (const auto& entry : std::filesystem::directory_iterator(batches_dir)) {
            if (entry.path().extension() == ".json") files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
        std::ifstream in(file);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        pool.add_batch(parse_prompt_batch(text));
    }
    const auto usage_path = dir / "usage.json";
    if (std::filesystem::exists(usage_path)) {
        std::ifstream in(usage_path);
        nlohmann::json usage = nlohmann::json::parse(in);
        for (const auto& [id, count] : usage.items()) {
            auto it = pool.index_.find(id);
            if (it == pool.index_.end()) {
                throw std::runtime_error("usage.json mentions unknown prompt id '" + id + "'");
            }
            if (!count.is_number_unsigned()) {
                throw std::runtime_error("usage counter for '" + id + "' must be non-negative");
            }
            pool.usage_[it->second] = count.get<uint64_t>();
        }
    }
    return pool;
}

void PromptPool::set_embedding(const std::string& id, std::vector<double> embedding) {
    if (!index_.contains(id)) throw std::invalid_argument("unknown prompt id '" + id + "'");
    embeddings_[id] = std::move(embedding);
}

PoolDiversityReport diversity_report(const PromptPool& pool) {
    PoolDiversityReport report;
    report.pairs = pool.size();
    std::set<std::string> fg, bg;
    for (const PromptPair& pair : pool.pairs()) {
        fg.insert(pair.foreground);
        bg.insert(pair.background);
    }
    report.distinct_foregrounds = fg.size();
    report.distinct_backgrounds = bg.size();
    report.min_usage = pool.min_usage();
    report.max_usage = pool.max_usage();

    const auto& emb = pool.embeddings();
    if (emb.size() >= 2) {
        double total = 0.0;
        size_t count = 0;
        for (auto a = emb.begin(); a != emb.end(); ++a) {
            for (auto b = std::next(a); b != emb.end(); ++b) {
                const size_t dims = std::min(a->second.size(), b->second.size());
                double d2 = 0.0;
                for (size_t i = 0; i < dims; ++i) {
                    const double d = a->second[i] - b->second[i];
                    d2 += d * d;
                }
                total += std::sqrt(d2);
                ++count;
            }
        }
        report.mean_pairwise_distance = total / static_cast<double>(count);
    }
    return report;
}

namespace {

void warn_batch_size(const PromptBatch& batch) {
    const size_t n = batch.pairs.size();
    if (n < 20 || n > 30) {
        std::cerr << "warning: prompt batch '" << batch.meta_prompt_id << "' has " << n
                  << " pairs, outside the usual 20-30\n";
    }
}

const char* kMaterials[] = {
    "weathered granite slabs", "mossy cobblestones", "rust-red bricks", "smooth river pebbles",
    "cracked concrete tiles", "pale sandstone blocks", "dark slate flags", "polished terrazzo",
    "sun-bleached planks", "glazed ceramic tiles", "rough basalt pavers", "compacted gravel",
};
const char* kFinishes[] = {
    "flecked with darker mineral deposits", "worn smooth by decades of footsteps",
    "laced with hairline cracks", "dusted with fine windblown sand",
    "streaked by old rainwater", "edged with tufts of stubborn moss",
    "pitted from seasons of frost", "still glistening from a recent shower",
    "bleached unevenly by the sun", "stained with faded chalk markings",
};
const char* kSites[] = {
    "an ancient alley of tea houses", "a monastery courtyard", "a harbor promenade",
    "a castle forecourt", "a covered market square", "a terraced temple garden",
    "a university quadrangle", "a hillside olive terrace", "a narrow canal-side lane",
    "a red-brick factory yard",
};
const char* kWeather[] = {
    "clear", "overcast", "misty", "drizzly", "windy", "snow-dusted", "humid", "crisp",
};
const char* kTimes[] = {
    "early-morning", "midday", "late-afternoon", "dusk", "blue-hour", "lamplit evening",
};
const char* kLighting[] = {
    "soft diffuse light", "hard slanting shadows", "warm lantern glow",
    "golden sidelight", "pale silvery glare", "dappled light through leaves",
    "cool shade broken by bright patches", "long low-angle highlights",
};
const char* kDetails[] = {
    "laundry lines sway overhead", "paper lanterns swing gently in the breeze",
    "gulls wheel and cry in the distance", "a fountain murmurs nearby",
    "bicycles lean against the walls", "market stalls spill color onto the stones",
    "ivy climbs the nearest facade", "a street musician plays somewhere out of sight",
    "steam drifts from a food cart", "banners ripple above the doorways",
};

template <size_t N>
const char* pick(SplitMix& rng, const char* (&bank)[N]) {
    return bank[rng.below(N)];
}

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

}  // namespace

PromptBatch OfflinePromptClient::request_batch(const std::string& meta_prompt) {
    const uint64_t h = fnv1a64(meta_prompt);
    const size_t n = 20 + h % 11;

    char id_buf[32];
    std::snprintf(id_buf, sizeof(id_buf), "offline-%08llx",
                  static_cast<unsigned long long>(splitmix64(h) & 0xffffffffull));

    PromptBatch batch;
    batch.meta_prompt_id = id_buf;
    SplitMix rng(splitmix64(h ^ 0x70726f6d7074ull));
    std::set<std::pair<std::string, std::string>> seen;
    while (batch.pairs.size() < n) {
        PromptPair pair;
        const std::string weather = pick(rng, kWeather);
        const std::string time = pick(rng, kTimes);
        const std::string lighting = pick(rng, kLighting);
        const std::string site = pick(rng, kSites);
        pair.foreground =
            std::string("A walkway of ") + pick(rng, kMaterials) + ", " + pick(rng, kFinishes) + ".";
        pair.background = capitalize(site) + " under " + weather + " " + time + " skies, bathed in " +
                          lighting + "; " + pick(rng, kDetails) + ".";
        if (!seen.emplace(pair.foreground, pair.background).second) continue;
        char pid[48];
        std::snprintf(pid, sizeof(pid), "%s-p%02zu", id_buf, batch.pairs.size());
        pair.id = pid;
        pair.tags = {weather, time, lighting, site};
        batch.pairs.push_back(std::move(pair));
    }
    warn_batch_size(batch);
    // The generator must produce what the parser accepts.
    return parse_prompt_batch(serialize_prompt_batch(batch));
}

RemotePromptClient::RemotePromptClient(PromptClientConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) {
        throw std::invalid_argument("prompt client endpoint is empty");
    }
}

PromptBatch RemotePromptClient::request_batch(const std::string& meta_prompt) {
    httplib::Client client(config_.endpoint);
    const auto timeout =
        std::chrono::milliseconds(static_cast<long>(config_.timeout_s * 1000.0));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    if (!config_.auth_token.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.auth_token);
    }
    const nlohmann::json body = {
        {"model", config_.model},
        {"messages", {{{"role", "user"}, {"content", meta_prompt}}}},
    };
    auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
    if (!res) {
        throw std::runtime_error("prompt endpoint " + config_.endpoint +
                                 " unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw std::runtime_error("prompt endpoint returned HTTP " + std::to_string(res->status) +
                                 ": " + res->body.substr(0, 200));
    }

    std::string content;
    try {
        content = nlohmann::json::parse(res->body)
                      .at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
        std::cerr << "prompt client: unexpected completion envelope, raw reply follows\n"
                  << res->body << "\n";
        throw std::runtime_error(std::string("malformed completion reply: ") + e.what());
    }

    // Models love to wrap JSON in a markdown fence; peel it off.
    std::string text = content;
    if (const size_t fence = text.find("```"); fence != std::string::npos) {
        const size_t open = text.find('\n', fence);
        const size_t close = text.rfind("```");
        if (open != std::string::npos && close > open) {
            text = text.substr(open + 1, close - open - 1);
        }
    }
    try {
        PromptBatch batch = parse_prompt_batch(text);
        warn_batch_size(batch);
        return batch;
    } catch (const std::exception& e) {
        std::cerr << "prompt client: unparseable batch reply, raw content follows\n"
                  << content << "\n";
        throw;
    }
}

const std::vector<PromptPair>& example_prompt_pairs() {
    static const std::vector<PromptPair> pairs = {
        {"granite-tea-house-alley",
         "Cool, gray slabs of granite that are flecked with darker mineral deposits. The polished "
         "finish is unmarred but faintly glistening under the ambient light, revealing a durable, "
         "ancient presence.",
         "An ancient alley lined with tea houses and small, quaint shops, each displaying "
         "traditional ornaments and calligraphy. The walls are adorned with ivy and red paper "
         "decorations, while overhead, strings of lanterns sway gently in the breeze.",
         {}},
        {"ceramic-box-sunny-lawn",
         "A ceramic box with colorful, intricate patterns.",
         "The sun illuminates a somewhat unkempt lawn dotted with dry patches. Gravel paths "
         "crisscross the grass, leading to sunlit, red-brick buildings with large, gleaming "
         "windows.",
         {"hurdle", "sunny afternoon"}},
        {"pebble-path-stone-wall-courtyard",
         "Composed of a myriad of small, smooth pebbles incorporated within, creating a uniquely "
         "textured appearance. Discoloration and cracks reflect its rich history of countless "
         "treaders.",
         "Walls of natural stone, varying from reds to yellows, provide a strikingly authentic "
         "atmosphere. Wrought iron railings draped with climbing roses frame the scene. The melody "
         "of a nearby street musician overlays the hum of quiet conversations, while the "
         "occasional cyclist clacks down the cobbled thoroughfare.",
         {"stairs", "cemented courtyard pathway"}},
    };
    return pairs;
}

const std::string& default_meta_prompt() {
    static const std::string text =
        "Image prompts: low-vantage obstacle-course scenes.\n"
        "\n"
        "I am building a library of image prompts for pictures of short outdoor obstacle courses "
        "photographed from a low vantage point. Each prompt has two parts: a foreground "
        "description of the walking surface or obstacle material, and a background description of "
        "the surrounding scene. Vary the weather, the time of day, the lighting conditions, and "
        "the kind of cultural or architectural site from prompt to prompt, and keep each part to "
        "one or two sentences of concrete visual detail.\n"
        "\n"
        "Please reply with 20 to 30 prompts as a single JSON object of the form "
        "{\"meta_prompt_id\": string, \"pairs\": [{\"id\": string, \"foreground\": string, "
        "\"background\": string, \"tags\": [string, ...]}, ...]} and no text outside the JSON.";
    return text;
}

}  // namespace tw
