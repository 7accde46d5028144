#pragma once

namespace vmvspread {

inline constexpr const char* version_string = "0.1.0";

}
