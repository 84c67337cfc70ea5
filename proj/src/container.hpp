#ifndef MLCA_CONTAINER_HPP
#define MLCA_CONTAINER_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace mlca {

// On-disk array container: 8-byte little-endian header length, JSON header
// {"version":"mlca-ckpt-v1","meta":{...},"arrays":[{name,dtype,shape,offset}]},
// then raw little-endian float64 payloads. Used for checkpoints and corpus
// arrays alike.
inline constexpr const char* kContainerVersion = "mlca-ckpt-v1";

class ContainerWriter {
 public:
  void set_meta(nlohmann::json meta) { meta_ = std::move(meta); }
  void add(const std::string& name, const std::vector<int>& shape,
           const std::vector<double>& data);
  void write(const std::string& path) const;

 private:
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
  };
  nlohmann::json meta_;
  std::vector<Entry> entries_;
};

class ContainerReader {
 public:
  explicit ContainerReader(const std::string& path);
  const nlohmann::json& meta() const { return meta_; }
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  std::vector<std::string> names() const;
  const std::vector<int>& shape(const std::string& name) const;
  std::vector<double> read(const std::string& name) const;

 private:
  struct Entry {
    std::vector<int> shape;
    std::uint64_t offset;
    std::uint64_t count;
  };
  std::string path_;
  nlohmann::json meta_;
  std::map<std::string, Entry> index_;
  std::uint64_t data_start_ = 0;
};

}  // namespace mlca

#endif
