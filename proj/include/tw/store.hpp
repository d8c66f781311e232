#pragma once

#include <filesystem>
#include <string>

namespace tw {

// Content-addressed object store on local disk: store/<namespace>/<digest>/
// holds one immutable object (a file or a whole directory, e.g. a frame
// stack). Writes are staged in a temp directory and renamed into place, so
// a key either exists completely or not at all. Re-putting identical
// content is a no-op; different content under an existing key is an error.
class Store {
  public:
    explicit Store(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }

    // namespace_path may contain '/' separators (e.g. "stacks/stairs/run3").
    std::filesystem::path path_of(const std::string& namespace_path,
                                  const std::string& digest) const;
    bool contains(const std::string& namespace_path, const std::string& digest) const;

    // Stores a single file under <namespace>/<digest>/<filename>.
    void put_bytes(const std::string& namespace_path, const std::string& digest,
                   const std::string& filename, const std::string& bytes);

    // Moves (or copies, across filesystems) a staged directory into place.
    void put_dir(const std::string& namespace_path, const std::string& digest,
                 const std::filesystem::path& staged);

    // A scratch directory on the store's filesystem for staging.
    std::filesystem::path make_staging_dir();

    // Digest over every object in the store; order-independent.
    std::string tree_digest() const;

    size_t object_count() const;

  private:
    void commit(const std::filesystem::path& staged, const std::filesystem::path& final_path);

    std::filesystem::path root_;
};

}  // namespace tw
