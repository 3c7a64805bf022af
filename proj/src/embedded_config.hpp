#pragma once

namespace posefix::detail {

// Contents of the shipped config/*.json files, compiled in so the library
// works without a config directory.
extern const char* const kDefaultErrorTable;
extern const char* const kToyErrorTable;
extern const char* const kDefaultSkeleton;

}  // namespace posefix::detail
