#include "tw/store.hpp"

#include "tw/digest.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>
#include <vector>

namespace tw {

namespace {

constexpr const char* kStagingDir = ".tmp";

void validate_component(const std::string& s, const char* what) {
    if (s.empty() || s.front() == '/' || s.back() == '/' || s.find("..") != std::string::npos) {
        throw std::invalid_argument(std::string(what) + " '" + s + "' is not a valid store path");
    }
}

}  // namespace

Store::Store(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
    std::filesystem::create_directories(root_ / kStagingDir);
}

std::filesystem::path Store::path_of(const std::string& namespace_path,
                                     const std::string& digest) const {
    validate_component(namespace_path, "namespace");
    validate_component(digest, "digest");
    if (digest.find('/') != std::string::npos) {
        throw std::invalid_argument("digest may not contain '/'");
    }
    return root_ / namespace_path / digest;
}

bool Store::contains(const std::string& namespace_path, const std::string& digest) const {
    return std::filesystem::exists(path_of(namespace_path, digest));
}

std::filesystem::path Store::make_staging_dir() {
    static std::atomic<uint64_t> counter{0};
    static thread_local std::mt19937_64 rng(std::random_device{}());
    const uint64_t tag = rng() ^ counter.fetch_add(1);
    char name[32];
    std::snprintf(name, sizeof(name), "stage-%016llx", static_cast<unsigned long long>(tag));
    const auto dir = root_ / kStagingDir / name;
    std::filesystem::create_directories(dir);
    return dir;
}

void Store::put_bytes(const std::string& namespace_path, const std::string& digest,
                      const std::string& filename, const std::string& bytes) {
    const auto staged = make_staging_dir();
    {
        std::ofstream out(staged / filename, std::ios::binary);
        if (!out) throw std::runtime_error("cannot stage " + (staged / filename).string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    commit(staged, path_of(namespace_path, digest));
}

void Store::put_dir(const std::string& namespace_path, const std::string& digest,
                    const std::filesystem::path& staged) {
    commit(staged, path_of(namespace_path, digest));
}

void Store::commit(const std::filesystem::path& staged, const std::filesystem::path& final_path) {
    if (std::filesystem::exists(final_path)) {
        if (sha256_tree(final_path) != sha256_tree(staged)) {
            throw std::runtime_error("store key " + final_path.string() +
                                     " already holds different content");
        }
        std::filesystem::remove_all(staged);
        return;
    }
    std::filesystem::create_directories(final_path.parent_path());
    std::error_code ec;
    std::filesystem::rename(staged, final_path, ec);
    if (!ec) return;
    // Lost a race with a concurrent writer, or crossed a filesystem.
    if (std::filesystem::exists(final_path)) {
        if (sha256_tree(final_path) != sha256_tree(staged)) {
            throw std::runtime_error("store key " + final_path.string() +
                                     " already holds different content");
        }
        std::filesystem::remove_all(staged);
        return;
    }
    std::filesystem::copy(staged, final_path, std::filesystem::copy_options::recursive);
    std::filesystem::remove_all(staged);
}

std::string Store::tree_digest() const {
    std::vector<std::string> lines;
    for (auto it = std::filesystem::recursive_directory_iterator(root_);
         it != std::filesystem::recursive_directory_iterator(); ++it) {
        if (it->path().filename() == kStagingDir) {
            it.disable_recursion_pending();
            continue;
        }
        if (!it->is_regular_file()) continue;
        const std::string rel = it->path().lexically_relative(root_).generic_string();
        lines.push_back(rel + " " + sha256_file(it->path()) + "\n");
    }
    std::sort(lines.begin(), lines.end());
    std::string joined;
    for (const auto& line : lines) joined += line;
    return sha256_hex(joined);
}

size_t Store::object_count() const {
    // An object is a directory directly holding at least one file (a stack
    // directory, a single stored blob, ...).
    size_t count = 0;
    for (auto it = std::filesystem::recursive_directory_iterator(root_);
         it != std::filesystem::recursive_directory_iterator(); ++it) {
        if (it->path().filename() == kStagingDir) {
            it.disable_recursion_pending();
            continue;
        }
        if (!it->is_directory()) continue;
        for (const auto& child : std::filesystem::directory_iterator(it->path())) {
            if (child.is_regular_file()) {
                ++count;
                break;
            }
        }
    }
    return count;
}

}  // namespace tw
