//! Counter-based random substreams.
//!
//! All sampling uses ChaCha8 (`rand_chacha`). The key is derived from the
//! user seed with `SeedableRng::seed_from_u64`, and the ChaCha stream id is
//! set to the iteration (or partition) index. Each iteration therefore owns
//! an independent stream that does not depend on how iterations are
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for iteration `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
