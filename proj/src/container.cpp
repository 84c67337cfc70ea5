#include "container.hpp"

#include <fstream>

#include "error.hpp"
#include "tensor.hpp"

namespace mlca {

void ContainerWriter::add(const std::string& name, const std::vector<int>& shape,
                          const std::vector<double>& data) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    throw DimensionError("container: array " + name + " shape/data mismatch");
  entries_.push_back({name, shape, data});
}

void ContainerWriter::write(const std::string& path) const {
  nlohmann::json header;
  header["version"] = kContainerVersion;
  header["meta"] = meta_.is_null() ? nlohmann::json::object() : meta_;
  nlohmann::json arrays = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : entries_) {
    arrays.push_back({{"name", e.name},
                      {"dtype", "f8"},
                      {"shape", e.shape},
                      {"offset", offset}});
    offset += e.data.size() * sizeof(double);
  }
  header["arrays"] = arrays;
  const std::string hs = header.dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw PathError("cannot open for writing: " + path);
  std::uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& e : entries_)
    f.write(reinterpret_cast<const char*>(e.data.data()),
            static_cast<std::streamsize>(e.data.size() * sizeof(double)));
  if (!f) throw PathError("write failed: " + path);
}

ContainerReader::ContainerReader(const std::string& path) : path_(path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PathError("cannot open: " + path);
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw PathError("truncated container header: " + path);
  nlohmann::json header = nlohmann::json::parse(hs);
  if (header.value("version", "") != kContainerVersion)
    throw ConfigError("container " + path + ": unsupported version '" +
                      header.value("version", "") + "'");
  meta_ = header["meta"];
  data_start_ = sizeof(hlen) + hlen;
  for (const auto& a : header["arrays"]) {
    Entry e;
    e.shape = a["shape"].get<std::vector<int>>();
    e.offset = a["offset"].get<std::uint64_t>();
    e.count = static_cast<std::uint64_t>(shape_numel(e.shape));
    index_[a["name"].get<std::string>()] = e;
  }
}

std::vector<std::string> ContainerReader::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : index_) out.push_back(k);
  return out;
}

const std::vector<int>& ContainerReader::shape(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw PathError("container " + path_ + ": no array named " + name);
  return it->second.shape;
}

std::vector<double> ContainerReader::read(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw PathError("container " + path_ + ": no array named " + name);
  std::ifstream f(path_, std::ios::binary);
  if (!f) throw PathError("cannot open: " + path_);
  f.seekg(static_cast<std::streamoff>(data_start_ + it->second.offset));
  std::vector<double> out(it->second.count);
  f.read(reinterpret_cast<char*>(out.data()),
         static_cast<std::streamsize>(out.size() * sizeof(double)));
  if (!f) throw PathError("truncated container data: " + path_);
  return out;
}

}  // namespace mlca
