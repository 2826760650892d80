int qv_dh_derive(const void *peer, void *secret);

static __attribute__((noinline)) int derive_shared_key(void)
{
    char secret[32];
    return qv_dh_derive("corpus-peer", secret);
}

int main(void)
{
    return derive_shared_key();
}
