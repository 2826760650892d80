int safe_aes256(const void *key, const void *in, void *out);

static __attribute__((noinline)) int encrypt_payload(void)
{
    char out[16];
    return safe_aes256("corpus-key", "corpus-in", out);
}

int main(void)
{
    return encrypt_payload();
}
