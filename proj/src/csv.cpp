#include "actchain/csv.hpp"

#include <boost/tokenizer.hpp>

namespace actchain {

std::vector<std::string> split_csv_line(const std::string& line) {
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  Tokenizer tok(line, boost::escaped_list_separator<char>('\\', ',', '"'));
  return {tok.begin(), tok.end()};
}

std::string csv_field(std::string_view value) {
  if (value.find_first_of(",\"\\") == std::string_view::npos) return std::string(value);
  std::string out = "\"";
  for (char c : value) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace actchain
