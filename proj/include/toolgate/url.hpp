#pragma once

#include <string>

namespace toolgate {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // leading '/', possibly with query; "/" when absent
};

// Splits an absolute http(s) URL into origin and path for client use.
SplitUrl split_url(const std::string& url);

// Percent-encodes everything outside the unreserved set [A-Za-z0-9._~-].
std::string percent_encode(const std::string& value);

}  // namespace toolgate
