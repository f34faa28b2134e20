import json

from sentinel_mesh import cipher


def decryption_closure(initial_keys, transcript, cache=None):
    """Independent closure oracle: derive keys by actually opening ciphertexts.

    Ignores all symbolic key-id bookkeeping; a key is derivable exactly when
    some held material opens a sealed payload.  An optional cache maps
    (message index, material) to the decryption result so repeated views over
    one transcript stay cheap.
    """
    cache = cache if cache is not None else {}
    materials = {key.material for key in initial_keys}
    known = {(key.key_id, key.version) for key in initial_keys}
    changed = True
    while changed:
        changed = False
        for index, message in enumerate(transcript):
            for material in list(materials):
                probe = (id(message), material)
                if probe in cache:
                    entries = cache[probe]
                else:
                    body = cipher.open_payload(
                        material, message.nonce, message.ciphertext
                    )
                    entries = None if body is None else json.loads(body.decode())
                    cache[probe] = entries
                if entries is None:
                    continue
                for key_id, version, key_material in entries:
                    if (key_id, version) not in known:
                        known.add((key_id, version))
                        materials.add(key_material)
                        changed = True
    return known
